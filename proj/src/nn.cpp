#include "dinorade/nn.hpp"

#include <cmath>
#include <numbers>

#include "dinorade/container.hpp"
#include "dinorade/errors.hpp"

namespace dinorade::nn {

Tensor ParameterStore::add(const std::string& name, ag::Shape shape, std::vector<double> init) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  Tensor t = Tensor::leaf(std::move(shape), std::move(init), true);
  entries_.emplace_back(name, t);
  return t;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) {
    Tensor t = e.second;
    t.zero_grad();
  }
}

std::vector<std::vector<double>> ParameterStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.second.data().begin(), e.second.data().end());
  return out;
}

void ParameterStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw ConfigError("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    Tensor t = entries_[i].second;
    auto dst = t.mutable_data();
    if (dst.size() != values[i].size()) throw ConfigError("snapshot shape mismatch");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::vector<Payload> payloads;
  nlohmann::json manifest = nlohmann::json::object();
  for (const auto& [name, t] : entries_) {
    Payload p{name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())};
    manifest[name] = t.shape();
    payloads.push_back(std::move(p));
  }
  write_container(path, "DRCKPT01", {{"manifest", manifest}}, payloads);
}

void ParameterStore::load(const std::filesystem::path& path) {
  const Container c = read_container(path, "DRCKPT01");
  if (c.payloads.size() != entries_.size())
    throw ConfigError("checkpoint incompatible: " + std::to_string(c.payloads.size()) +
                      " tensors, model has " + std::to_string(entries_.size()));
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [name, t] = entries_[i];
    const Payload& p = c.payloads[i];
    if (p.name != name || p.shape != t.shape())
      throw ConfigError("checkpoint incompatible at '" + name + "': file has '" + p.name + "' " +
                        ag::shape_str(p.shape) + ", model expects " + ag::shape_str(t.shape()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    Tensor t = entries_[i].second;
    auto dst = t.mutable_data();
    const auto& src = c.payloads[i].data;
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::vector<double> uniform_init(std::mt19937_64& rng, std::size_t n, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

Linear Linear::create(ParameterStore& store, std::mt19937_64& rng, const std::string& name,
                      int in, int out, bool with_bias, bool zero_init) {
  Linear l;
  const std::size_t n = static_cast<std::size_t>(in) * out;
  const double bound = std::sqrt(6.0 / in);  // He-uniform for ReLU stacks
  l.weight = store.add(name + ".weight", {in, out},
                       zero_init ? std::vector<double>(n, 0.0) : uniform_init(rng, n, bound));
  if (with_bias) l.bias = store.add(name + ".bias", {out}, std::vector<double>(out, 0.0));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  return ag::linear(x, weight, bias.defined() ? &bias : nullptr);
}

Conv2d Conv2d::create(ParameterStore& store, std::mt19937_64& rng, const std::string& name,
                      int in, int out, int kernel, int stride, bool with_bias) {
  Conv2d c;
  const int fan_in = kernel * kernel * in;
  const std::size_t n = static_cast<std::size_t>(fan_in) * out;
  c.weight = store.add(name + ".weight", {kernel, kernel, in, out},
                       uniform_init(rng, n, std::sqrt(6.0 / fan_in)));
  if (with_bias) c.bias = store.add(name + ".bias", {out}, std::vector<double>(out, 0.0));
  c.stride = stride;
  c.pad = kernel / 2;
  return c;
}

Tensor Conv2d::operator()(const Tensor& x) const {
  return ag::conv2d(x, weight, bias.defined() ? &bias : nullptr, stride, pad);
}

AdamW::AdamW(const ParameterStore& store, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& e : store.entries()) {
    m_.emplace_back(e.second.size(), 0.0);
    v_.emplace_back(e.second.size(), 0.0);
  }
}

void AdamW::step(ParameterStore& store, double lr) {
  const auto& entries = store.entries();
  if (entries.size() != m_.size()) throw ConfigError("optimizer/parameter count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor p = entries[i].second;
    const auto& g = p.node()->grad;
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      w[k] -= lr * cfg_.weight_decay * w[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
      w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
    }
  }
}

double cosine_lr(long step, long total_steps, double lr_max, double lr_min) {
  if (total_steps <= 1) return lr_max;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace dinorade::nn
