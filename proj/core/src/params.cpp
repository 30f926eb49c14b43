#include "swarmseg/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "swarmseg/errors.hpp"

namespace swarmseg {

namespace {

constexpr char kMagic[4] = {'M', 'A', 'S', 'H'};
constexpr std::uint8_t kFormatVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

Param& ParamBundle::add(const std::string& name, GridTensor init) {
  if (index_.count(name)) throw config_error("ParamBundle: duplicate entry '" + name + "'");
  Param p;
  p.name = name;
  p.grad = GridTensor(init.rows, init.cols, init.channels, 0.0);
  p.value = std::move(init);
  index_[name] = entries_.size();
  entries_.push_back(std::move(p));
  return entries_.back();
}

Param& ParamBundle::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw config_error("ParamBundle: missing entry '" + name + "'");
  return entries_[it->second];
}

const Param& ParamBundle::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw config_error("ParamBundle: missing entry '" + name + "'");
  return entries_[it->second];
}

bool ParamBundle::has(const std::string& name) const { return index_.count(name) > 0; }

void ParamBundle::zero_grads() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

void ParamBundle::sgd_step(double learning_rate) {
  for (auto& e : entries_) {
    const std::size_t n = e.value.size();
    for (std::size_t i = 0; i < n; ++i) e.value.data[i] -= learning_rate * e.grad.data[i];
    e.grad.fill(0.0);
  }
}

void ParamBundle::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  os.put(static_cast<char>(kFormatVersion));
  for (const auto& e : entries_) {
    write_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(os, static_cast<std::uint32_t>(e.value.rows));
    write_u32(os, static_cast<std::uint32_t>(e.value.cols));
    write_u32(os, static_cast<std::uint32_t>(e.value.channels));
    for (double v : e.value.data) write_f64(os, v);
  }
  if (!os) throw data_error("write failed on '" + path + "'");
}

ParamBundle ParamBundle::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("'" + path + "' is not a weight file (bad magic)");
  const int version = is.get();
  if (version != kFormatVersion)
    throw data_error("'" + path + "' has unsupported format version " + std::to_string(version));
  ParamBundle bundle;
  while (true) {
    const std::uint32_t name_len = read_u32(is);
    if (is.eof()) break;
    if (!is) throw data_error("truncated weight file '" + path + "'");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const int rows = static_cast<int>(read_u32(is));
    const int cols = static_cast<int>(read_u32(is));
    const int channels = static_cast<int>(read_u32(is));
    if (!is) throw data_error("truncated weight file '" + path + "'");
    GridTensor t(rows, cols, channels);
    for (auto& v : t.data) v = read_f64(is);
    if (!is) throw data_error("truncated weight file '" + path + "'");
    bundle.add(name, std::move(t));
    is.peek();  // set eof before the next header read
    if (is.eof()) break;
  }
  return bundle;
}

void ParamBundle::absorb(ParamBundle other) {
  for (auto& e : other.entries_) {
    if (index_.count(e.name)) throw config_error("ParamBundle::absorb: duplicate '" + e.name + "'");
    index_[e.name] = entries_.size();
    entries_.push_back(std::move(e));
  }
}

GridTensor glorot_uniform(Rng& rng, int rows, int cols, int channels, int fan_in, int fan_out) {
  const double a = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
  GridTensor t(rows, cols, channels);
  for (auto& v : t.data) v = rng.uniform(-a, a);
  return t;
}

GridTensor init_conv_kernel(Rng& rng, int ksize, int in_ch, int out_ch) {
  const int fan_in = ksize * ksize * in_ch;
  const int fan_out = ksize * ksize * out_ch;
  return glorot_uniform(rng, ksize * ksize, in_ch, out_ch, fan_in, fan_out);
}

GridTensor zero_conv_kernel(int ksize, int in_ch, int out_ch) {
  return GridTensor(ksize * ksize, in_ch, out_ch, 0.0);
}

GridTensor zero_bias(int out_ch) { return GridTensor(1, 1, out_ch, 0.0); }

void save_tensor(const std::string& path, const std::string& name, const GridTensor& t) {
  ParamBundle b;
  b.add(name, t);
  b.save(path);
}

GridTensor load_tensor(const std::string& path) {
  ParamBundle b = ParamBundle::load(path);
  if (b.size() != 1) throw data_error("'" + path + "' holds " + std::to_string(b.size()) + " tensors, expected 1");
  return b.entries()[0].value;
}

void save_int_grid(const std::string& path, const std::string& name, const IntGrid& g) {
  GridTensor t(g.rows, g.cols, 1);
  for (std::size_t i = 0; i < g.size(); ++i) t.data[i] = static_cast<double>(g.data[i]);
  save_tensor(path, name, t);
}

IntGrid load_int_grid(const std::string& path) {
  GridTensor t = load_tensor(path);
  if (t.channels != 1) throw data_error("'" + path + "': expected a 1-channel grid");
  IntGrid g(t.rows, t.cols);
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = static_cast<int>(std::llround(t.data[i]));
  return g;
}

}  // namespace swarmseg
