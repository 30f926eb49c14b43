#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "swarmseg/grid.hpp"
#include "swarmseg/rng.hpp"

namespace swarmseg {

struct Param {
  std::string name;
  GridTensor value;
  GridTensor grad;  // shape-identical to value, accumulated until sgd_step
};

// Named store of trainable tensors with accumulated gradients. Names are
// unique; insertion order is preserved (it defines SGD update order and the
// on-disk entry order).
class ParamBundle {
 public:
  Param& add(const std::string& name, GridTensor init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<Param>& entries() { return entries_; }
  const std::vector<Param>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grads();

  // w <- w - lr * g for every entry, then gradients are zeroed.
  void sgd_step(double learning_rate);

  // Binary weight file: magic "MASH", one version byte, then per entry:
  // u32le name length, UTF-8 name, 3 x u32le shape, f64le data.
  void save(const std::string& path) const;
  static ParamBundle load(const std::string& path);

  // Merge entries from another bundle (e.g. checkpoints saved per subsystem).
  void absorb(ParamBundle other);

 private:
  std::vector<Param> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
GridTensor glorot_uniform(Rng& rng, int rows, int cols, int channels, int fan_in, int fan_out);

// Convolution kernel tensor: rows = ksize*ksize, cols = in_ch, channels = out_ch.
GridTensor init_conv_kernel(Rng& rng, int ksize, int in_ch, int out_ch);
GridTensor zero_conv_kernel(int ksize, int in_ch, int out_ch);
GridTensor zero_bias(int out_ch);

// Single-tensor convenience wrappers over the bundle format.
void save_tensor(const std::string& path, const std::string& name, const GridTensor& t);
GridTensor load_tensor(const std::string& path);

void save_int_grid(const std::string& path, const std::string& name, const IntGrid& g);
IntGrid load_int_grid(const std::string& path);

}  // namespace swarmseg
