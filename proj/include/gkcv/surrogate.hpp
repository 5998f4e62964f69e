#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gkcv/common.hpp"
#include "gkcv/model.hpp"

namespace gkcv {

enum class Featurization { Identity, LangevinTorus };

const char* featurization_name(Featurization f);
Featurization featurization_from_name(const std::string& name);

// (q1,q2,p1,p2) -> (sin q1, cos q1, sin q2, cos q2, p1, p2, (p1^2+p2^2)/2).
// Exactly 2 pi periodic in the positions.
void langevin_featurize(std::span<const double> qp, std::span<double> out7);

// Dense tanh network with a fixed functional featurization layer in front:
// featurize -> affine+tanh -> affine+tanh -> affine. Parameters are stored
// per layer as the row-major weight matrix followed by the bias vector.
struct Surrogate {
  Featurization featurization = Featurization::Identity;
  std::size_t raw_dim = 1;
  std::vector<std::size_t> layer_dims;  // [features, hidden..., outputs]
  std::vector<double> params;

  std::size_t n_layers() const { return layer_dims.size() - 1; }
  std::size_t feature_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t param_count() const;
  // offset of layer l's weights; biases follow the weight block
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;

  static Surrogate make(Featurization feat, std::size_t raw_dim,
                        std::vector<std::size_t> layer_dims);
  void glorot_init(std::uint64_t seed);
};

// Scratch for one forward/backward pass; reuse across calls.
struct NetWorkspace {
  std::vector<double> features;
  std::vector<std::vector<double>> activations;  // post-nonlinearity per layer
  std::vector<double> delta_a, delta_b;
};

void forward(const Surrogate& net, std::span<const double> x, std::span<double> out,
             NetWorkspace& ws);
double forward_scalar(const Surrogate& net, std::span<const double> x, NetWorkspace& ws);

// Accumulates scale * d(seed . output)/d(theta) into grad; ws must hold the
// activations of a preceding forward(net, x, ...) call.
void backward(const Surrogate& net, const NetWorkspace& ws, std::span<const double> seed,
              double scale, std::span<double> grad);

// Gradient of the scalar output with respect to every parameter.
std::vector<double> param_gradient(const Surrogate& net, std::span<const double> x);

// Scalar field view psi(x) = net(x); scalar-output nets only.
ScalarField surrogate_field(const Surrogate& net);

struct TrainConfig {
  double learning_rate = 0.002;
  std::size_t batch_size = 500;
  std::size_t n_steps = 2000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::string checkpoint_path;          // empty: no checkpoints
  std::size_t checkpoint_every = 100;
  void validate() const;
};

struct LossHistory {
  std::vector<std::pair<std::size_t, double>> entries;  // (step, batch loss)
};

// Thrown when the training loss diverges (NaN or >= 1e6); carries the loss
// history recorded so far.
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, LossHistory history)
      : NumericError(what), history(std::move(history)) {}
  LossHistory history;
};

// The squared-residual objective | L^D net + rhs |^2 averaged over mu-samples.
// The generator acts on the model-state slice of the net input (coordinates
// [gen_offset, gen_offset + model->dim_state)); for plain problems the slice
// is the whole input. The adjoint flag switches to L*^D.
struct PinnProblem {
  const DynamicsModel* model = nullptr;
  bool adjoint = false;
  std::size_t input_dim = 0;
  std::size_t gen_offset = 0;
  // writes output_dim right-hand-side values at the given input point
  std::function<void(std::span<const double>, std::span<double>)> rhs;
  // draws one input point
  std::function<void(Rng&, std::span<double>)> sampler;
};

PinnProblem poisson_problem(const DynamicsModel& model, ScalarField rhs, bool adjoint = false);

double pinn_loss(const Surrogate& net, const PinnProblem& problem,
                 std::span<const double> batch, std::size_t n_points);
// loss value plus d(loss)/d(theta); exact for the discretized objective
// (chain rule through every stencil evaluation).
double pinn_loss_gradient(const Surrogate& net, const PinnProblem& problem,
                          std::span<const double> batch, std::size_t n_points,
                          std::span<double> grad);

// Adam on fresh mu-batches each step; returns the per-step loss history.
LossHistory adam_train(Surrogate& net, const PinnProblem& problem, const TrainConfig& cfg);

// Trains the 5-input/3-output slow-drift surrogate over nu x mu (x uniform on
// the cube, y from the fast invariant measure); generator acts in y only.
std::pair<Surrogate, LossHistory> multiscale_train(const MultiscaleParams& params,
                                                   const TrainConfig& cfg, bool adjoint = false);
PinnProblem multiscale_problem(const MultiscaleParams& params, const DynamicsModel& fast_model,
                               bool adjoint);
Surrogate make_multiscale_net(std::uint64_t seed);
Surrogate make_langevin_net(std::uint64_t seed);

// d net_i / d x_j (3x3, row-major) by centered differences in the slow
// variables; multiscale (5-input, 3-output) nets only.
void x_gradient(const Surrogate& net, std::span<const double> x, std::span<const double> y,
                std::span<double> out9);

// Versioned little-endian binary (magic "GKCV"), plus a JSON sidecar at
// path + ".json" describing featurization and shapes.
void save_surrogate(const Surrogate& net, const std::string& path,
                    const std::string& sidecar_note = "");
Surrogate load_surrogate(const std::string& path);

}  // namespace gkcv
