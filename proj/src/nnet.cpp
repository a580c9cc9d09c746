#include "autoscale/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/core.h>

namespace autoscale::nn {

namespace {

constexpr char kMagic[8] = {'A', 'S', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void check_input(const NetworkSpec& spec, const Params& params, std::size_t input_len) {
  if (static_cast<int>(input_len) != spec.input_dim) {
    throw ShapeError(fmt::format("input has {} features, network expects {}", input_len,
                                 spec.input_dim));
  }
  if (params.size() != spec.param_count()) {
    throw ShapeError(fmt::format("parameter vector has {} entries, network expects {}",
                                 params.size(), spec.param_count()));
  }
}

}  // namespace

int NetworkSpec::output_dim() const { return std::accumulate(heads.begin(), heads.end(), 0); }

std::vector<int> NetworkSpec::layer_sizes() const {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_dim());
  return sizes;
}

std::size_t NetworkSpec::param_count() const {
  const auto sizes = layer_sizes();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    n += static_cast<std::size_t>(sizes[l] + 1) * static_cast<std::size_t>(sizes[l + 1]);
  }
  return n;
}

void NetworkSpec::validate() const {
  if (input_dim <= 0) throw ShapeError("input_dim must be positive");
  if (heads.empty()) throw ShapeError("network needs at least one output head");
  for (int h : hidden) {
    if (h <= 0) throw ShapeError("hidden sizes must be positive");
  }
  for (int h : heads) {
    if (h <= 0) throw ShapeError("head sizes must be positive");
  }
}

NetworkSpec NetworkSpec::actor(int input_dim, int levels, std::uint64_t seed) {
  return NetworkSpec{input_dim, {150, 150}, {levels, levels, levels}, seed};
}

NetworkSpec NetworkSpec::critic(int input_dim, std::uint64_t seed) {
  return NetworkSpec{input_dim, {150, 150}, {1}, seed};
}

Params init_params(const NetworkSpec& spec) {
  spec.validate();
  const auto sizes = spec.layer_sizes();
  Params p;
  p.reserve(spec.param_count());
  std::mt19937_64 rng(spec.seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (int i = 0; i < sizes[l] * sizes[l + 1]; ++i) p.push_back(u(rng));
    for (int i = 0; i < sizes[l + 1]; ++i) p.push_back(0.0);
  }
  return p;
}

std::vector<double> forward(const NetworkSpec& spec, const Params& params,
                            const std::vector<double>& x, ForwardCache* cache) {
  check_input(spec, params, x.size());
  const auto sizes = spec.layer_sizes();
  const std::size_t layers = sizes.size() - 1;
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  std::vector<double> a = x;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const double* w = params.data() + offset;
    const double* b = w + static_cast<std::size_t>(in) * out;
    std::vector<double> z(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in;
      double s = b[o];
      for (int i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = (l + 1 < layers) ? std::max(0.0, s) : s;
    }
    offset += static_cast<std::size_t>(in + 1) * out;
    a = std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

void backward(const NetworkSpec& spec, const Params& params, const ForwardCache& cache,
              const std::vector<double>& grad_out, Params& grad) {
  const auto sizes = spec.layer_sizes();
  const std::size_t layers = sizes.size() - 1;
  if (grad.size() != params.size()) throw ShapeError("gradient buffer size mismatch");
  if (static_cast<int>(grad_out.size()) != spec.output_dim()) {
    throw ShapeError("output gradient size mismatch");
  }
  std::vector<std::size_t> offsets(layers);
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = offset;
    offset += static_cast<std::size_t>(sizes[l] + 1) * sizes[l + 1];
  }
  std::vector<double> delta = grad_out;  // dL/dz of the current layer
  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const auto& a_in = cache.activations[l];
    const double* w = params.data() + offsets[l];
    double* gw = grad.data() + offsets[l];
    double* gb = gw + static_cast<std::size_t>(in) * out;
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      double* row = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) row[i] += d * a_in[i];
      gb[o] += d;
    }
    if (l == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(in), 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) prev[i] += d * row[i];
    }
    for (int i = 0; i < in; ++i) {
      if (a_in[i] <= 0.0) prev[i] = 0.0;  // ReLU
    }
    delta = std::move(prev);
  }
}

HeadProbs softmax_heads(const NetworkSpec& spec, const std::vector<double>& logits) {
  HeadProbs out;
  std::size_t k = 0;
  for (int h : spec.heads) {
    std::vector<double> p(logits.begin() + static_cast<long>(k),
                          logits.begin() + static_cast<long>(k + h));
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : p) v /= sum;
    out.push_back(std::move(p));
    k += static_cast<std::size_t>(h);
  }
  return out;
}

HeadProbs forward_actor(const NetworkSpec& spec, const Params& params,
                        const std::vector<double>& state) {
  return softmax_heads(spec, forward(spec, params, state));
}

double forward_critic(const NetworkSpec& spec, const Params& params,
                      const std::vector<double>& state) {
  return forward(spec, params, state).at(0);
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double log_joint_probability(const HeadProbs& probs, const std::vector<int>& action) {
  if (action.size() != probs.size()) throw ShapeError("action arity does not match head count");
  double s = 0.0;
  for (std::size_t h = 0; h < probs.size(); ++h) {
    s += std::log(std::max(probs[h].at(static_cast<std::size_t>(action[h])), kProbFloor));
  }
  return s;
}

double actor_objective(const NetworkSpec& spec, const Params& params,
                       const std::vector<ActorSample>& batch, double entropy_coef) {
  if (batch.empty()) throw std::invalid_argument("actor batch is empty");
  double total = 0.0;
  for (const auto& s : batch) {
    const auto probs = forward_actor(spec, params, s.state);
    double h = 0.0;
    for (const auto& p : probs) h += entropy(p);
    total += log_joint_probability(probs, s.action) * s.advantage + entropy_coef * h;
  }
  return total / static_cast<double>(batch.size());
}

Params actor_gradient(const NetworkSpec& spec, const Params& params,
                      const std::vector<ActorSample>& batch, double entropy_coef) {
  if (batch.empty()) throw std::invalid_argument("actor batch is empty");
  Params grad(params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  for (const auto& s : batch) {
    if (s.action.size() != spec.heads.size()) throw ShapeError("action arity does not match head count");
    const auto logits = forward(spec, params, s.state, &cache);
    const auto probs = softmax_heads(spec, logits);
    std::vector<double> g(logits.size());
    std::size_t k = 0;
    for (std::size_t h = 0; h < probs.size(); ++h) {
      const auto& p = probs[h];
      const auto a = static_cast<std::size_t>(s.action[h]);
      if (a >= p.size()) throw ShapeError("action index outside head");
      const double H = entropy(p);
      // d log max(p_a, floor) / dz is zero once the floor is active.
      const bool floored = p[a] < kProbFloor;
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double logp = p[j] > 0.0 ? std::log(p[j]) : 0.0;
        const double dlog = floored ? 0.0 : ((j == a ? 1.0 : 0.0) - p[j]);
        const double dent = -p[j] * (logp + H);
        g[k + j] = scale * (dlog * s.advantage + entropy_coef * dent);
      }
      k += p.size();
    }
    backward(spec, params, cache, g, grad);
  }
  return grad;
}

double critic_loss(const NetworkSpec& spec, const Params& params,
                   const std::vector<CriticSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("critic batch is empty");
  double total = 0.0;
  for (const auto& s : batch) {
    const double e = s.target - forward_critic(spec, params, s.state);
    total += e * e;
  }
  return total / static_cast<double>(batch.size());
}

Params critic_gradient(const NetworkSpec& spec, const Params& params,
                       const std::vector<CriticSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("critic batch is empty");
  Params grad(params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  for (const auto& s : batch) {
    const double v = forward(spec, params, s.state, &cache).at(0);
    backward(spec, params, cache, {-2.0 * (s.target - v) * scale}, grad);
  }
  return grad;
}

void clip_norm(Params& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (double& g : grad) g *= f;
  }
}

void adam_step(const AdamConfig& cfg, AdamState& st, Params& params, const Params& grad) {
  if (grad.size() != params.size()) {
    throw ShapeError(fmt::format("gradient has {} entries, parameters {}", grad.size(), params.size()));
  }
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

ParameterStore::ParameterStore(NetworkSpec spec, AdamConfig adam)
    : ParameterStore(spec, adam, init_params(spec)) {}

ParameterStore::ParameterStore(NetworkSpec spec, AdamConfig adam, Params params)
    : spec_(std::move(spec)), adam_(adam), params_(std::move(params)) {
  spec_.validate();
  if (params_.size() != spec_.param_count()) throw ShapeError("parameter count does not match spec");
}

Params ParameterStore::snapshot() const {
  std::lock_guard lock(mu_);
  return params_;
}

Params ParameterStore::snapshot(std::uint64_t& version) const {
  std::lock_guard lock(mu_);
  version = version_;
  return params_;
}

std::uint64_t ParameterStore::apply(const Params& descent_grad) {
  std::lock_guard lock(mu_);
  adam_step(adam_, state_, params_, descent_grad);
  return ++version_;
}

void ParameterStore::set_params(Params params) {
  std::lock_guard lock(mu_);
  if (params.size() != params_.size()) throw ShapeError("parameter count does not match spec");
  params_ = std::move(params);
}

std::uint64_t ParameterStore::version() const {
  std::lock_guard lock(mu_);
  return version_;
}

AdamState ParameterStore::optimizer_state() const {
  std::lock_guard lock(mu_);
  return state_;
}

void ParameterStore::restore(Params params, AdamState state, std::uint64_t version) {
  std::lock_guard lock(mu_);
  if (params.size() != params_.size()) throw ShapeError("parameter count does not match spec");
  params_ = std::move(params);
  state_ = std::move(state);
  version_ = version;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw ShapeError(fmt::format("checkpoint has no network named '{}'", name));
}

CheckpointEntry to_entry(const std::string& name, const ParameterStore& store) {
  std::uint64_t version = 0;
  CheckpointEntry e;
  e.name = name;
  e.spec = store.spec();
  e.params = store.snapshot(version);
  e.version = version;
  e.adam = store.optimizer_state();
  return e;
}

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint64_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_vector(std::ostream& out, const std::vector<double>& v) {
  put(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void put_ints(std::ostream& out, const std::vector<int>& v) {
  put(out, static_cast<std::uint32_t>(v.size()));
  for (int x : v) put(out, static_cast<std::int32_t>(x));
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) fail("truncated file");
    return v;
  }

  std::uint64_t length(std::uint64_t limit) {
    const auto n = get<std::uint64_t>();
    if (n > limit) fail("implausible length field");
    return n;
  }

  std::string string() {
    std::string s(length(1u << 20), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) fail("truncated file");
    return s;
  }

  std::vector<double> doubles() {
    std::vector<double> v(length(1ull << 32));
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in_) fail("truncated file");
    return v;
  }

  std::vector<int> ints() {
    const auto n = get<std::uint32_t>();
    if (n > 1024) fail("implausible layer count");
    std::vector<int> v;
    for (std::uint32_t i = 0; i < n; ++i) v.push_back(get<std::int32_t>());
    return v;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ShapeError(fmt::format("{}: {}", source_, what));
  }

 private:
  std::istream& in_;
  std::string source_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot write checkpoint", path.string()));
  out.write(kMagic, sizeof(kMagic));
  put(out, kFormatVersion);
  put_string(out, ckpt.metadata);
  put(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    put_string(out, e.name);
    put(out, static_cast<std::int32_t>(e.spec.input_dim));
    put_ints(out, e.spec.hidden);
    put_ints(out, e.spec.heads);
    put(out, e.spec.seed);
    put(out, e.version);
    put_vector(out, e.params);
    put(out, e.adam.t);
    put_vector(out, e.adam.m);
    put_vector(out, e.adam.v);
  }
  if (!out) throw std::runtime_error(fmt::format("{}: write failed", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("{}: cannot open checkpoint", path.string()));
  Reader r(in, path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("not a checkpoint file");
  const auto format = r.get<std::uint32_t>();
  if (format != kFormatVersion) r.fail(fmt::format("unsupported checkpoint format {}", format));
  Checkpoint ckpt;
  ckpt.metadata = r.string();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.string();
    e.spec.input_dim = r.get<std::int32_t>();
    e.spec.hidden = r.ints();
    e.spec.heads = r.ints();
    e.spec.seed = r.get<std::uint64_t>();
    e.version = r.get<std::uint64_t>();
    e.params = r.doubles();
    e.adam.t = r.get<std::uint64_t>();
    e.adam.m = r.doubles();
    e.adam.v = r.doubles();
    e.spec.validate();
    if (e.params.size() != e.spec.param_count()) r.fail(fmt::format("network '{}' has a corrupt payload", e.name));
    if (!e.adam.m.empty() && (e.adam.m.size() != e.params.size() || e.adam.v.size() != e.params.size())) {
      r.fail(fmt::format("network '{}' has corrupt optimizer state", e.name));
    }
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

}  // namespace autoscale::nn
