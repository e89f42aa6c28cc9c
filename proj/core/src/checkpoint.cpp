#include "trinet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

namespace trinet {

namespace {

constexpr char kMagic[4] = {'T', 'R', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 8);
}

void write_f64(std::ofstream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

void write_string(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  write_bytes(out, s.data(), s.size());
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw std::runtime_error(std::string("load_checkpoint: truncated file (") + what +
                             ")");
  }
}

std::uint32_t read_u32(std::ifstream& in, const char* what) {
  unsigned char b[4];
  read_bytes(in, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::ifstream& in, const char* what) {
  unsigned char b[8];
  read_bytes(in, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::ifstream& in, const char* what) {
  return std::bit_cast<double>(read_u64(in, what));
}

std::string read_string(std::ifstream& in, const char* what) {
  const std::uint64_t length = read_u64(in, what);
  std::string s(length, '\0');
  read_bytes(in, s.data(), length, what);
  return s;
}

void write_param_map(std::ofstream& out, const ParameterMap& params) {
  write_u64(out, params.size());
  for (const auto& [name, tensor] : params) {
    write_string(out, name);
    const unsigned char flag = tensor.requires_grad() ? 1 : 0;
    write_bytes(out, &flag, 1);
    write_u64(out, tensor.rank());
    for (std::size_t d : tensor.shape()) write_u64(out, d);
    for (double v : tensor.values()) write_f64(out, v);
  }
}

ParameterMap read_param_map(std::ifstream& in, const char* what) {
  ParameterMap params;
  const std::uint64_t count = read_u64(in, what);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, what);
    unsigned char flag = 0;
    read_bytes(in, &flag, 1, what);
    const std::uint64_t rank = read_u64(in, what);
    Shape shape(rank);
    for (std::uint64_t d = 0; d < rank; ++d) shape[d] = read_u64(in, what);
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = read_f64(in, what);
    params.insert(name, Tensor(std::move(shape), std::move(values), flag != 0));
  }
  return params;
}

void write_moments(std::ofstream& out,
                   const std::map<std::string, std::vector<double>>& moments) {
  write_u64(out, moments.size());
  for (const auto& [name, values] : moments) {
    write_string(out, name);
    write_u64(out, values.size());
    for (double v : values) write_f64(out, v);
  }
}

std::map<std::string, std::vector<double>> read_moments(std::ifstream& in,
                                                        const char* what) {
  std::map<std::string, std::vector<double>> moments;
  const std::uint64_t count = read_u64(in, what);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, what);
    std::vector<double> values(read_u64(in, what));
    for (double& v : values) v = read_f64(in, what);
    moments.emplace(name, std::move(values));
  }
  return moments;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write '" + path + "'");

  write_bytes(out, kMagic, 4);
  write_u32(out, kFormatVersion);
  write_u64(out, checkpoint.step);
  write_string(out, checkpoint.config_text);
  write_f64(out, checkpoint.branches.ema_decay);
  write_u64(out, checkpoint.branches.top_k);
  write_param_map(out, checkpoint.branches.student);
  write_param_map(out, checkpoint.branches.ema_teacher);
  write_param_map(out, checkpoint.branches.frozen_teacher);
  write_u64(out, checkpoint.optimizer_state.step);
  write_moments(out, checkpoint.optimizer_state.first_moment);
  write_moments(out, checkpoint.optimizer_state.second_moment);

  if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot read '" + path + "'");

  char magic[4];
  read_bytes(in, magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kMagic)) {
    throw std::runtime_error("load_checkpoint: '" + path +
                             "' is not a TRCK checkpoint file");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kFormatVersion) {
    throw std::runtime_error("load_checkpoint: unsupported checkpoint version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kFormatVersion) + ")");
  }

  Checkpoint checkpoint;
  checkpoint.step = read_u64(in, "step");
  checkpoint.config_text = read_string(in, "config");
  checkpoint.branches.ema_decay = read_f64(in, "ema_decay");
  checkpoint.branches.top_k = read_u64(in, "top_k");
  checkpoint.branches.student = read_param_map(in, "student parameters");
  checkpoint.branches.ema_teacher = read_param_map(in, "ema teacher parameters");
  checkpoint.branches.frozen_teacher = read_param_map(in, "frozen teacher parameters");
  checkpoint.optimizer_state.step = read_u64(in, "optimizer step");
  checkpoint.optimizer_state.first_moment = read_moments(in, "first moments");
  checkpoint.optimizer_state.second_moment = read_moments(in, "second moments");

  in.peek();
  if (!in.eof()) {
    throw std::runtime_error("load_checkpoint: trailing bytes in '" + path + "'");
  }
  return checkpoint;
}

}  // namespace trinet
