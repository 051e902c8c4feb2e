#pragma once

// Parameters, layers and the optimizer used by every trainable module.

#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dinorade/ops.hpp"

namespace dinorade::nn {

using ag::Tensor;

/// Named, ordered registry of trainable tensors. Order of registration is the
/// order of checkpoint payloads and optimizer updates.
class ParameterStore {
 public:
  Tensor add(const std::string& name, ag::Shape shape, std::vector<double> init);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

  /// Weight checkpoint: container of float32 tensors, manifest name -> shape.
  void save(const std::filesystem::path& path) const;
  /// Throws ConfigError when names or shapes differ from the registered set.
  void load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

std::vector<double> uniform_init(std::mt19937_64& rng, std::size_t n, double bound);

struct Linear {
  Tensor weight;  // {in, out}
  Tensor bias;    // {out}, undefined when bias-free

  static Linear create(ParameterStore& store, std::mt19937_64& rng, const std::string& name,
                       int in, int out, bool with_bias = true, bool zero_init = false);
  Tensor operator()(const Tensor& x) const;
};

struct Conv2d {
  Tensor weight;  // {k, k, in, out}
  Tensor bias;
  int stride = 1;
  int pad = 0;

  static Conv2d create(ParameterStore& store, std::mt19937_64& rng, const std::string& name,
                       int in, int out, int kernel, int stride = 1, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(const ParameterStore& store, AdamWConfig cfg);
  /// Applies one update with learning rate lr using the accumulated grads.
  void step(ParameterStore& store, double lr);
  long steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

/// Cosine annealing from lr_max at step 0 to lr_min at the last step
/// (total_steps - 1).
double cosine_lr(long step, long total_steps, double lr_max, double lr_min);

}  // namespace dinorade::nn
