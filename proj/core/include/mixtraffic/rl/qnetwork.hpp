#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mixtraffic/action.hpp"
#include "mixtraffic/mdp.hpp"
#include "mixtraffic/random.hpp"

namespace mixtraffic::rl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixF = Eigen::MatrixXf;
using VectorF = Eigen::VectorXf;

struct NetworkShape {
  int input = static_cast<int>(kObservationSize);
  std::vector<int> hidden{512, 512, 512};
  int actions = static_cast<int>(kActionCount);
  int atoms = 1;  // > 1 selects the distributional head
  bool noisy = false;
  double noisy_sigma0 = 0.5;
  // Forward/backward arithmetic in float against a float mirror of the
  // (double) parameters; gradients are still accumulated in double.
  bool single_precision = false;

  void validate() const;
  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

// Fully connected layer y = W x + b. With noise enabled the effective weights
// are W + sigma_W .* (f(e_out) f(e_in)^T), factorized Gaussian noise.
struct Linear {
  Matrix w;
  Vector b;
  Matrix sigma_w;  // empty unless noisy
  Vector sigma_b;
  Vector eps_in;
  Vector eps_out;

  int in() const { return static_cast<int>(w.cols()); }
  int out() const { return static_cast<int>(w.rows()); }
  bool noisy() const { return sigma_w.size() > 0; }
  Matrix effective_w() const;
  Vector effective_b() const;
};

// Same layout as the network's layers; gradients or optimizer moments.
struct ParamSet {
  std::vector<Linear> layers;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Trunk of ReLU hidden layers followed by a dueling head. Output rows are
// indexed a * atoms + z and hold V(z) + A(a, z) - mean_a' A(a', z): the Q
// values when atoms == 1, per-action logits of the return distribution
// otherwise.
class QNetwork {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer (post-ReLU for hidden)
    std::vector<Matrix> pre;     // pre-activation of each trunk layer
    std::vector<MatrixF> inputs_f;  // single-precision counterparts
    std::vector<MatrixF> pre_f;
  };

  QNetwork() = default;
  QNetwork(NetworkShape shape, std::uint64_t seed);

  const NetworkShape& shape() const { return shape_; }
  // Trunk layers, then the value head, then the advantage head. Mutable
  // access invalidates the single-precision mirror.
  std::vector<Linear>& layers() {
    mirror_valid_ = false;
    return layers_;
  }
  const std::vector<Linear>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  // x: input x batch. Returns (actions * atoms) x batch.
  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& cache) const;
  // Accumulates dL/dparams into `grads` given dL/d(output).
  void backward(const Cache& cache, const Matrix& d_out, ParamSet& grads) const;

  // Q values, atoms x batch collapsed to actions x batch.
  Matrix q_values(const Matrix& x) const;
  std::array<double, kActionCount> q_values(const Observation& obs) const;

  // Support of the return distribution (size atoms); {0} for the scalar head.
  const std::vector<double>& support() const { return support_; }
  void set_support(double v_min, double v_max);

  void resample_noise(Rng& rng);
  void clear_noise();

  ParamSet zeros_like() const;
  friend bool operator==(const QNetwork& a, const QNetwork& b);

 private:
  template <class M>
  M head_combine(const M& value, const M& adv) const;
  template <class M>
  void head_split(const M& d_out, M& d_value, M& d_adv) const;
  Matrix forward_single(const Matrix& x, Cache& cache) const;
  void backward_single(const Cache& cache, const Matrix& d_out, ParamSet& grads) const;
  void refresh_mirror() const;

  struct LinearF {
    MatrixF w;
    VectorF b;
  };

  NetworkShape shape_;
  std::vector<Linear> layers_;
  std::vector<double> support_{0.0};
  // Lazily rebuilt; a network shared across threads must be refreshed (by
  // one forward call) before concurrent use.
  mutable std::vector<LinearF> mirror_;
  mutable bool mirror_valid_ = false;
};

Matrix to_matrix(const std::vector<Observation>& batch);

// Column-wise softmax over each action's atom block.
Matrix atom_softmax(const Matrix& logits, int actions, int atoms);

}  // namespace mixtraffic::rl
