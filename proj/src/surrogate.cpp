#include "gkcv/surrogate.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "gkcv/kernels.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "surrogate file format assumes a little-endian host");

namespace gkcv {

const char* featurization_name(Featurization f) {
  switch (f) {
    case Featurization::Identity:
      return "identity";
    case Featurization::LangevinTorus:
      return "langevin_torus";
  }
  throw std::invalid_argument("unknown featurization");
}

Featurization featurization_from_name(const std::string& name) {
  if (name == "identity") return Featurization::Identity;
  if (name == "langevin_torus") return Featurization::LangevinTorus;
  throw ConfigError("unknown featurization '" + name + "'");
}

void langevin_featurize(std::span<const double> qp, std::span<double> out7) {
  out7[0] = std::sin(qp[0]);
  out7[1] = std::cos(qp[0]);
  out7[2] = std::sin(qp[1]);
  out7[3] = std::cos(qp[1]);
  out7[4] = qp[2];
  out7[5] = qp[3];
  out7[6] = 0.5 * (qp[2] * qp[2] + qp[3] * qp[3]);
}

namespace {

std::size_t featurized_dim(Featurization f, std::size_t raw_dim) {
  return f == Featurization::LangevinTorus ? 7 : raw_dim;
}

void featurize(Featurization f, std::span<const double> x, std::span<double> out) {
  if (f == Featurization::LangevinTorus) {
    langevin_featurize(x, out);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
  }
}

void ensure_workspace(const Surrogate& net, NetWorkspace& ws) {
  ws.features.resize(net.feature_dim());
  ws.activations.resize(net.n_layers() + 1);
  std::size_t widest = 0;
  for (std::size_t l = 0; l <= net.n_layers(); ++l) {
    ws.activations[l].resize(net.layer_dims[l]);
    widest = std::max(widest, net.layer_dims[l]);
  }
  ws.delta_a.resize(widest);
  ws.delta_b.resize(widest);
}

}  // namespace

std::size_t Surrogate::param_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l)
    count += (layer_dims[l] + 1) * layer_dims[l + 1];
  return count;
}

std::size_t Surrogate::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += (layer_dims[l] + 1) * layer_dims[l + 1];
  return off;
}

std::size_t Surrogate::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + layer_dims[layer] * layer_dims[layer + 1];
}

Surrogate Surrogate::make(Featurization feat, std::size_t raw_dim,
                          std::vector<std::size_t> layer_dims) {
  if (layer_dims.size() < 2) throw std::invalid_argument("surrogate needs >= 2 layer dims");
  if (layer_dims.front() != featurized_dim(feat, raw_dim))
    throw std::invalid_argument("surrogate: first layer dim must match featurization output");
  Surrogate net;
  net.featurization = feat;
  net.raw_dim = raw_dim;
  net.layer_dims = std::move(layer_dims);
  net.params.assign(net.param_count(), 0.0);
  return net;
}

void Surrogate::glorot_init(std::uint64_t seed) {
  Rng rng = stream_rng(seed, 0);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l], fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    double* w = params.data() + weight_offset(l);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) w[i] = uniform(rng);
    double* b = params.data() + bias_offset(l);
    for (std::size_t i = 0; i < fan_out; ++i) b[i] = 0.0;
  }
}

void forward(const Surrogate& net, std::span<const double> x, std::span<double> out,
             NetWorkspace& ws) {
  if (x.size() != net.raw_dim) throw std::invalid_argument("surrogate: input arity mismatch");
  ensure_workspace(net, ws);
  featurize(net.featurization, x, ws.features);
  std::copy(ws.features.begin(), ws.features.end(), ws.activations[0].begin());
  const std::size_t layers = net.n_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t rows = net.layer_dims[l + 1], cols = net.layer_dims[l];
    const double* w = net.params.data() + net.weight_offset(l);
    const double* b = net.params.data() + net.bias_offset(l);
    kernels::matvec(w, rows, cols, ws.activations[l].data(), b, ws.activations[l + 1].data());
    if (l + 1 < layers) {
      double* a = ws.activations[l + 1].data();
      for (std::size_t i = 0; i < rows; ++i) a[i] = std::tanh(a[i]);
    }
  }
  for (std::size_t i = 0; i < net.output_dim(); ++i) out[i] = ws.activations[layers][i];
}

double forward_scalar(const Surrogate& net, std::span<const double> x, NetWorkspace& ws) {
  double out;
  forward(net, x, {&out, 1}, ws);
  return out;
}

void backward(const Surrogate& net, const NetWorkspace& ws, std::span<const double> seed,
              double scale, std::span<double> grad) {
  const std::size_t layers = net.n_layers();
  NetWorkspace& mut = const_cast<NetWorkspace&>(ws);
  double* delta = mut.delta_a.data();
  double* delta_prev = mut.delta_b.data();
  for (std::size_t i = 0; i < net.output_dim(); ++i) delta[i] = seed[i];
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t rows = net.layer_dims[l + 1], cols = net.layer_dims[l];
    const double* w = net.params.data() + net.weight_offset(l);
    double* gw = grad.data() + net.weight_offset(l);
    double* gb = grad.data() + net.bias_offset(l);
    kernels::rank1_update(scale, delta, ws.activations[l].data(), gw, rows, cols);
    kernels::axpy(scale, delta, gb, rows);
    if (l > 0) {
      kernels::matvec_t(w, rows, cols, delta, delta_prev);
      const double* a = ws.activations[l].data();  // tanh outputs of layer l
      for (std::size_t i = 0; i < cols; ++i) delta_prev[i] *= 1.0 - a[i] * a[i];
      std::swap(delta, delta_prev);
    }
  }
}

std::vector<double> param_gradient(const Surrogate& net, std::span<const double> x) {
  if (net.output_dim() != 1)
    throw std::invalid_argument("param_gradient: scalar-output nets only");
  NetWorkspace ws;
  double out;
  forward(net, x, {&out, 1}, ws);
  std::vector<double> grad(net.param_count(), 0.0);
  const double seed = 1.0;
  backward(net, ws, {&seed, 1}, 1.0, grad);
  return grad;
}

ScalarField surrogate_field(const Surrogate& net) {
  if (net.output_dim() != 1)
    throw std::invalid_argument("surrogate_field: scalar-output nets only");
  return [net](std::span<const double> x) {
    thread_local NetWorkspace ws;
    double out;
    forward(net, x, {&out, 1}, ws);
    return out;
  };
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (n_steps < 1) throw ConfigError("train: n_steps must be >= 1");
}

PinnProblem poisson_problem(const DynamicsModel& model, ScalarField rhs, bool adjoint) {
  PinnProblem problem;
  problem.model = &model;
  problem.adjoint = adjoint;
  problem.input_dim = model.dim_state;
  problem.gen_offset = 0;
  problem.rhs = [rhs = std::move(rhs)](std::span<const double> x, std::span<double> out) {
    out[0] = rhs(x);
  };
  problem.sampler = [&model](Rng& rng, std::span<double> out) {
    model.invariant_sampler(rng, out);
  };
  return problem;
}

namespace {

// Residual r_i = L^D net_i(x) + rhs_i(x) at one batch point. The stencil acts
// on the model-state slice of the input; other coordinates stay frozen. The
// grouped-difference evaluation matches apply_generator_fd.
struct PointEval {
  std::vector<double> residual;
  FdStencil stencil;
  std::vector<double> full_point;
  std::vector<double> out0, outp, outm;
};

void eval_residual(const Surrogate& net, const PinnProblem& problem, std::span<const double> x,
                   PointEval& pe, NetWorkspace& ws, std::vector<double>& out_scratch) {
  const std::size_t out_dim = net.output_dim();
  const std::size_t slice_dim = problem.model->dim_state;
  pe.residual.assign(out_dim, 0.0);
  pe.full_point.assign(x.begin(), x.end());
  pe.stencil = generator_fd_stencil(
      *problem.model, std::span<const double>(x.data() + problem.gen_offset, slice_dim),
      problem.adjoint);
  pe.outp.resize(out_dim);
  pe.outm.resize(out_dim);
  pe.out0.assign(out_dim, 0.0);
  if (pe.stencil.has_second()) forward(net, pe.full_point, pe.out0, ws);
  for (const auto& term : pe.stencil.terms) {
    double& coord = pe.full_point[problem.gen_offset + term.coord];
    const double base = coord;
    coord = base + term.step;
    forward(net, pe.full_point, pe.outp, ws);
    coord = base - term.step;
    forward(net, pe.full_point, pe.outm, ws);
    coord = base;
    for (std::size_t i = 0; i < out_dim; ++i) {
      pe.residual[i] += term.second_order
                            ? term.factor * ((pe.outp[i] - pe.out0[i]) + (pe.outm[i] - pe.out0[i]))
                            : term.factor * (pe.outp[i] - pe.outm[i]);
    }
  }
  out_scratch.resize(out_dim);
  problem.rhs(x, out_scratch);
  for (std::size_t i = 0; i < out_dim; ++i) pe.residual[i] += out_scratch[i];
}

double residual_sq(const PointEval& pe) {
  double acc = 0.0;
  for (double r : pe.residual) acc += r * r;
  return acc;
}

}  // namespace

double pinn_loss(const Surrogate& net, const PinnProblem& problem, std::span<const double> batch,
                 std::size_t n_points) {
  if (n_points == 0) throw std::invalid_argument("pinn_loss: empty batch");
  const std::size_t in_dim = problem.input_dim;
  // fixed-size blocks keep the reduction independent of worker count
  constexpr std::size_t kBlock = 64;
  const std::size_t n_blocks = (n_points + kBlock - 1) / kBlock;
  std::vector<double> block_sums(n_blocks, 0.0);
  parallel_for(n_blocks, [&](std::size_t blk) {
    NetWorkspace ws;
    PointEval pe;
    std::vector<double> scratch;
    double acc = 0.0;
    const std::size_t hi = std::min(n_points, (blk + 1) * kBlock);
    for (std::size_t p = blk * kBlock; p < hi; ++p) {
      const std::span<const double> x(batch.data() + p * in_dim, in_dim);
      eval_residual(net, problem, x, pe, ws, scratch);
      const double rsq = residual_sq(pe);
      if (!std::isfinite(rsq))
        throw NumericError("pinn_loss: NaN residual at batch point " + std::to_string(p));
      acc += rsq;
    }
    block_sums[blk] = acc;
  });
  return kernels::sum(block_sums.data(), n_blocks) / static_cast<double>(n_points);
}

double pinn_loss_gradient(const Surrogate& net, const PinnProblem& problem,
                          std::span<const double> batch, std::size_t n_points,
                          std::span<double> grad) {
  if (n_points == 0) throw std::invalid_argument("pinn_loss_gradient: empty batch");
  const std::size_t in_dim = problem.input_dim;
  const std::size_t n_params = net.param_count();
  const std::size_t out_dim = net.output_dim();
  const double inv_n = 1.0 / static_cast<double>(n_points);

  constexpr std::size_t kBlock = 64;
  const std::size_t n_blocks = (n_points + kBlock - 1) / kBlock;
  std::vector<double> block_sums(n_blocks, 0.0);
  std::vector<std::vector<double>> block_grads(n_blocks);

  parallel_for(n_blocks, [&](std::size_t blk) {
    NetWorkspace ws;
    PointEval pe;
    std::vector<double> scratch, seed(out_dim);
    std::vector<double>& bg = block_grads[blk];
    bg.assign(n_params, 0.0);
    double acc = 0.0;
    const std::size_t hi = std::min(n_points, (blk + 1) * kBlock);
    for (std::size_t p = blk * kBlock; p < hi; ++p) {
      const std::span<const double> x(batch.data() + p * in_dim, in_dim);
      eval_residual(net, problem, x, pe, ws, scratch);
      const double rsq = residual_sq(pe);
      if (!std::isfinite(rsq))
        throw NumericError("pinn_loss_gradient: NaN residual at batch point " + std::to_string(p));
      acc += rsq;
      // d/dtheta |r|^2 = 2 sum over the flat stencil expansion of
      // c_k (r . d net(x_k)/dtheta)
      for (std::size_t i = 0; i < out_dim; ++i) seed[i] = pe.residual[i];
      scratch.resize(out_dim);
      double center_coeff = 0.0;
      for (const auto& term : pe.stencil.terms) {
        double& coord = pe.full_point[problem.gen_offset + term.coord];
        const double base = coord;
        coord = base + term.step;
        forward(net, pe.full_point, scratch, ws);
        backward(net, ws, seed, 2.0 * inv_n * term.factor, bg);
        coord = base - term.step;
        forward(net, pe.full_point, scratch, ws);
        backward(net, ws, seed, 2.0 * inv_n * (term.second_order ? term.factor : -term.factor),
                 bg);
        coord = base;
        if (term.second_order) center_coeff -= 2.0 * term.factor;
      }
      if (center_coeff != 0.0) {
        forward(net, pe.full_point, scratch, ws);
        backward(net, ws, seed, 2.0 * inv_n * center_coeff, bg);
      }
    }
    block_sums[blk] = acc;
  });

  for (std::size_t i = 0; i < n_params; ++i) grad[i] = 0.0;
  for (std::size_t blk = 0; blk < n_blocks; ++blk)
    kernels::axpy(1.0, block_grads[blk].data(), grad.data(), n_params);
  return kernels::sum(block_sums.data(), n_blocks) * inv_n;
}

LossHistory adam_train(Surrogate& net, const PinnProblem& problem, const TrainConfig& cfg) {
  cfg.validate();
  LossHistory history;
  history.entries.reserve(cfg.n_steps);

  const std::size_t n_params = net.param_count();
  std::vector<double> grad(n_params), m(n_params, 0.0), v(n_params, 0.0);
  std::vector<double> batch(cfg.batch_size * problem.input_dim);
  Rng batch_rng = stream_rng(cfg.seed, 0xba7c4);

  for (std::size_t step = 0; step < cfg.n_steps; ++step) {
    for (std::size_t p = 0; p < cfg.batch_size; ++p)
      problem.sampler(batch_rng, {batch.data() + p * problem.input_dim, problem.input_dim});

    const double loss = pinn_loss_gradient(net, problem, batch, cfg.batch_size, grad);
    history.entries.emplace_back(step, loss);
    if (!std::isfinite(loss) || loss >= 1e6)
      throw TrainingError("adam_train: loss diverged at step " + std::to_string(step), history);

    const double t = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    for (std::size_t i = 0; i < n_params; ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      net.params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }

    if (!cfg.checkpoint_path.empty() && (step + 1) % cfg.checkpoint_every == 0)
      save_surrogate(net, cfg.checkpoint_path, "checkpoint at step " + std::to_string(step + 1));
  }
  return history;
}

Surrogate make_langevin_net(std::uint64_t seed) {
  Surrogate net = Surrogate::make(Featurization::LangevinTorus, 4, {7, 15, 15, 1});
  net.glorot_init(seed);
  return net;
}

Surrogate make_multiscale_net(std::uint64_t seed) {
  Surrogate net = Surrogate::make(Featurization::Identity, 5, {5, 12, 12, 3});
  net.glorot_init(seed);
  return net;
}

PinnProblem multiscale_problem(const MultiscaleParams& params, const DynamicsModel& fast_model,
                               bool adjoint) {
  PinnProblem problem;
  problem.model = &fast_model;
  problem.adjoint = adjoint;
  problem.input_dim = 5;
  problem.gen_offset = 3;  // generator acts in y = (input[3], input[4])
  problem.rhs = [](std::span<const double> in, std::span<double> out) {
    out[0] = in[3];
    out[1] = in[4];
    out[2] = in[0] * in[4] - in[1] * in[3];
  };
  const double hw = params.nu_cube_halfwidth;
  problem.sampler = [hw](Rng& rng, std::span<double> out) {
    std::uniform_real_distribution<double> uniform(-hw, hw);
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    out[0] = uniform(rng);
    out[1] = uniform(rng);
    out[2] = uniform(rng);
    out[3] = normal(rng);
    out[4] = normal(rng);
  };
  return problem;
}

std::pair<Surrogate, LossHistory> multiscale_train(const MultiscaleParams& params,
                                                   const TrainConfig& cfg, bool adjoint) {
  const DynamicsModel fast = make_multiscale_fast(params);
  Surrogate net = make_multiscale_net(cfg.seed);
  const PinnProblem problem = multiscale_problem(params, fast, adjoint);
  LossHistory history = adam_train(net, problem, cfg);
  return {std::move(net), std::move(history)};
}

void x_gradient(const Surrogate& net, std::span<const double> x, std::span<const double> y,
                std::span<double> out9) {
  if (net.raw_dim != 5 || net.output_dim() != 3)
    throw std::invalid_argument("x_gradient: 5-input/3-output nets only");
  static const double h_base = std::cbrt(std::numeric_limits<double>::epsilon());
  thread_local NetWorkspace ws;
  double input[5] = {x[0], x[1], x[2], y[0], y[1]};
  double plus[3], minus[3];
  for (std::size_t j = 0; j < 3; ++j) {
    double h = h_base * std::max(1.0, std::abs(x[j]));
    volatile double tmp = x[j] + h;
    h = tmp - x[j];
    input[j] = x[j] + h;
    forward(net, {input, 5}, plus, ws);
    input[j] = x[j] - h;
    forward(net, {input, 5}, minus, ws);
    input[j] = x[j];
    for (std::size_t i = 0; i < 3; ++i) out9[i * 3 + j] = (plus[i] - minus[i]) / (2.0 * h);
  }
}

// ---------------------------------------------------------------------------
// serialization

namespace {

constexpr char kMagic[4] = {'G', 'K', 'C', 'V'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
void read_pod(std::istream& is, T& value) {
  is.read(reinterpret_cast<char*>(&value), sizeof value);
}

}  // namespace

void save_surrogate(const Surrogate& net, const std::string& path, const std::string& note) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw NumericError("save_surrogate: cannot open '" + path + "'");
  os.write(kMagic, 4);
  write_pod(os, kFormatVersion);
  write_pod(os, static_cast<std::uint32_t>(net.featurization));
  write_pod(os, static_cast<std::uint32_t>(net.raw_dim));
  write_pod(os, static_cast<std::uint32_t>(net.layer_dims.size()));
  for (std::size_t d : net.layer_dims) write_pod(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(net.params.data()),
           static_cast<std::streamsize>(net.params.size() * sizeof(double)));
  if (!os) throw NumericError("save_surrogate: write failed for '" + path + "'");

  nlohmann::json sidecar;
  sidecar["format"] = "gkcv-surrogate";
  sidecar["version"] = kFormatVersion;
  sidecar["featurization"] = featurization_name(net.featurization);
  sidecar["raw_dim"] = net.raw_dim;
  sidecar["layer_dims"] = net.layer_dims;
  sidecar["param_count"] = net.param_count();
  if (!note.empty()) sidecar["note"] = note;
  std::ofstream js(path + ".json", std::ios::trunc);
  js << sidecar.dump(2) << '\n';
}

Surrogate load_surrogate(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NumericError("load_surrogate: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw NumericError("load_surrogate: bad magic in '" + path + "'");
  std::uint32_t version, feat, raw_dim, n_dims;
  read_pod(is, version);
  if (version != kFormatVersion)
    throw NumericError("load_surrogate: unsupported format version in '" + path + "'");
  read_pod(is, feat);
  read_pod(is, raw_dim);
  read_pod(is, n_dims);
  if (!is || n_dims < 2 || n_dims > 16) throw NumericError("load_surrogate: corrupt header");
  std::vector<std::size_t> dims(n_dims);
  for (std::size_t i = 0; i < n_dims; ++i) {
    std::uint32_t v;
    read_pod(is, v);
    dims[i] = v;
  }
  Surrogate net = Surrogate::make(static_cast<Featurization>(feat), raw_dim, std::move(dims));
  is.read(reinterpret_cast<char*>(net.params.data()),
          static_cast<std::streamsize>(net.params.size() * sizeof(double)));
  if (!is) throw NumericError("load_surrogate: truncated parameter block in '" + path + "'");
  return net;
}

}  // namespace gkcv
