#include "mixtraffic/rl/qnetwork.hpp"

#include <cmath>
#include <string>

namespace mixtraffic::rl {

namespace {

double noise_transform(double x) { return (x < 0.0 ? -1.0 : 1.0) * std::sqrt(std::abs(x)); }

Linear make_linear(int in, int out, const NetworkShape& shape, Rng& rng) {
  // Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.w.resize(out, in);
  l.b.resize(out);
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) l.w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
  }
  for (int r = 0; r < out; ++r) l.b(r) = (2.0 * rng.uniform() - 1.0) * bound;
  if (shape.noisy) {
    const double s = shape.noisy_sigma0 / std::sqrt(static_cast<double>(in));
    l.sigma_w = Matrix::Constant(out, in, s);
    l.sigma_b = Vector::Constant(out, s);
    l.eps_in = Vector::Zero(in);
    l.eps_out = Vector::Zero(out);
  }
  return l;
}

Matrix apply(const Linear& l, const Matrix& x) {
  Matrix y;
  if (l.noisy()) {
    y.noalias() = l.effective_w() * x;
    y.colwise() += l.effective_b();
  } else {
    y.noalias() = l.w * x;
    y.colwise() += l.b;
  }
  return y;
}

// d_in = W_eff^T d_out
Matrix back_through(const Linear& l, const Matrix& d_out) {
  Matrix d;
  if (l.noisy()) {
    d.noalias() = l.effective_w().transpose() * d_out;
  } else {
    d.noalias() = l.w.transpose() * d_out;
  }
  return d;
}

void accumulate(const Linear& l, const Matrix& input, const Matrix& d_out, Linear& g) {
  const Vector db = d_out.rowwise().sum();
  g.b += db;
  if (l.noisy()) {
    const Matrix dw = d_out * input.transpose();
    g.w += dw;
    g.sigma_w += dw.cwiseProduct(l.eps_out * l.eps_in.transpose());
    g.sigma_b += db.cwiseProduct(l.eps_out);
  } else {
    g.w.noalias() += d_out * input.transpose();
  }
}

}  // namespace

void NetworkShape::validate() const {
  if (input <= 0 || actions <= 0) throw ShapeError("network input and action counts must be positive");
  if (hidden.empty()) throw ShapeError("network needs at least one hidden layer");
  for (const auto h : hidden) {
    if (h <= 0) throw ShapeError("hidden layer widths must be positive");
  }
  if (atoms < 1) throw ShapeError("atoms must be >= 1");
  if (noisy && !(noisy_sigma0 > 0.0)) throw ShapeError("noisy_sigma0 must be positive");
}

Matrix Linear::effective_w() const {
  if (!noisy()) return w;
  return w + sigma_w.cwiseProduct(eps_out * eps_in.transpose());
}

Vector Linear::effective_b() const {
  if (!noisy()) return b;
  return b + sigma_b.cwiseProduct(eps_out);
}

QNetwork::QNetwork(NetworkShape shape, std::uint64_t seed) : shape_(std::move(shape)) {
  shape_.validate();
  Rng rng(seed);
  int in = shape_.input;
  for (const auto h : shape_.hidden) {
    layers_.push_back(make_linear(in, h, shape_, rng));
    in = h;
  }
  layers_.push_back(make_linear(in, shape_.atoms, shape_, rng));
  layers_.push_back(make_linear(in, shape_.actions * shape_.atoms, shape_, rng));
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.w.size() + l.b.size() + l.sigma_w.size() + l.sigma_b.size();
  return n;
}

void QNetwork::set_support(double v_min, double v_max) {
  if (shape_.atoms == 1) {
    support_ = {0.0};
    return;
  }
  if (!(v_max > v_min)) throw ShapeError("distributional support needs v_max > v_min");
  support_.resize(static_cast<std::size_t>(shape_.atoms));
  const double dz = (v_max - v_min) / (shape_.atoms - 1);
  for (int i = 0; i < shape_.atoms; ++i) support_[static_cast<std::size_t>(i)] = v_min + dz * i;
}

template <class M>
M QNetwork::head_combine(const M& value, const M& adv) const {
  const int k = shape_.atoms;
  const int a = shape_.actions;
  M mean = M::Zero(k, adv.cols());
  for (int j = 0; j < a; ++j) mean += adv.middleRows(j * k, k);
  mean /= static_cast<typename M::Scalar>(a);
  M out(a * k, adv.cols());
  for (int j = 0; j < a; ++j) out.middleRows(j * k, k) = value + adv.middleRows(j * k, k) - mean;
  return out;
}

template <class M>
void QNetwork::head_split(const M& d_out, M& d_value, M& d_adv) const {
  const int k = shape_.atoms;
  const int a = shape_.actions;
  d_value = M::Zero(k, d_out.cols());
  for (int j = 0; j < a; ++j) d_value += d_out.middleRows(j * k, k);
  const M d_mean = d_value / static_cast<typename M::Scalar>(a);
  d_adv.resize(a * k, d_out.cols());
  for (int j = 0; j < a; ++j) d_adv.middleRows(j * k, k) = d_out.middleRows(j * k, k) - d_mean;
}

Matrix QNetwork::forward(const Matrix& x) const {
  Cache unused;
  return forward(x, unused);
}

Matrix QNetwork::forward(const Matrix& x, Cache& cache) const {
  if (x.rows() != shape_.input) {
    throw ShapeError("observation has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(shape_.input));
  }
  if (shape_.single_precision) return forward_single(x, cache);
  const auto trunk = shape_.hidden.size();
  cache.inputs.assign(trunk + 1, Matrix());
  cache.pre.assign(trunk, Matrix());
  cache.inputs[0] = x;
  for (std::size_t i = 0; i < trunk; ++i) {
    cache.pre[i] = apply(layers_[i], cache.inputs[i]);
    cache.inputs[i + 1] = cache.pre[i].cwiseMax(0.0);
  }
  const Matrix value = apply(layers_[trunk], cache.inputs[trunk]);
  const Matrix adv = apply(layers_[trunk + 1], cache.inputs[trunk]);
  return head_combine(value, adv);
}

void QNetwork::refresh_mirror() const {
  if (mirror_valid_) return;
  mirror_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    mirror_[i].w = layers_[i].effective_w().cast<float>();
    mirror_[i].b = layers_[i].effective_b().cast<float>();
  }
  mirror_valid_ = true;
}

Matrix QNetwork::forward_single(const Matrix& x, Cache& cache) const {
  refresh_mirror();
  const auto trunk = shape_.hidden.size();
  auto lin = [&](std::size_t i, const MatrixF& in) {
    MatrixF y;
    y.noalias() = mirror_[i].w * in;
    y.colwise() += mirror_[i].b;
    return y;
  };
  cache.inputs_f.assign(trunk + 1, MatrixF());
  cache.pre_f.assign(trunk, MatrixF());
  cache.inputs_f[0] = x.cast<float>();
  for (std::size_t i = 0; i < trunk; ++i) {
    cache.pre_f[i] = lin(i, cache.inputs_f[i]);
    cache.inputs_f[i + 1] = cache.pre_f[i].cwiseMax(0.0f);
  }
  const MatrixF value = lin(trunk, cache.inputs_f[trunk]);
  const MatrixF adv = lin(trunk + 1, cache.inputs_f[trunk]);
  return head_combine(value, adv).cast<double>();
}

void QNetwork::backward(const Cache& cache, const Matrix& d_out, ParamSet& grads) const {
  if (shape_.single_precision) {
    backward_single(cache, d_out, grads);
    return;
  }
  const auto trunk = shape_.hidden.size();
  Matrix d_value, d_adv;
  head_split(d_out, d_value, d_adv);

  const auto& value_head = layers_[trunk];
  const auto& adv_head = layers_[trunk + 1];
  accumulate(value_head, cache.inputs[trunk], d_value, grads.layers[trunk]);
  accumulate(adv_head, cache.inputs[trunk], d_adv, grads.layers[trunk + 1]);
  Matrix d_h = back_through(value_head, d_value) + back_through(adv_head, d_adv);

  for (std::size_t i = trunk; i-- > 0;) {
    const Matrix d_pre = d_h.cwiseProduct((cache.pre[i].array() > 0.0).cast<double>().matrix());
    accumulate(layers_[i], cache.inputs[i], d_pre, grads.layers[i]);
    if (i > 0) d_h = back_through(layers_[i], d_pre);
  }
}

void QNetwork::backward_single(const Cache& cache, const Matrix& d_out, ParamSet& grads) const {
  refresh_mirror();
  const auto trunk = shape_.hidden.size();
  auto acc = [&](std::size_t i, const MatrixF& input, const MatrixF& d) {
    const MatrixF dw = d * input.transpose();
    const VectorF db = d.rowwise().sum();
    auto& g = grads.layers[i];
    const auto& l = layers_[i];
    g.w += dw.cast<double>();
    g.b += db.cast<double>();
    if (l.noisy()) {
      g.sigma_w += dw.cast<double>().cwiseProduct(l.eps_out * l.eps_in.transpose());
      g.sigma_b += db.cast<double>().cwiseProduct(l.eps_out);
    }
  };
  auto back = [&](std::size_t i, const MatrixF& d) {
    MatrixF r;
    r.noalias() = mirror_[i].w.transpose() * d;
    return r;
  };
  MatrixF d_value, d_adv;
  head_split(MatrixF(d_out.cast<float>()), d_value, d_adv);
  acc(trunk, cache.inputs_f[trunk], d_value);
  acc(trunk + 1, cache.inputs_f[trunk], d_adv);
  MatrixF d_h = back(trunk, d_value) + back(trunk + 1, d_adv);
  for (std::size_t i = trunk; i-- > 0;) {
    const MatrixF d_pre = d_h.cwiseProduct((cache.pre_f[i].array() > 0.0f).cast<float>().matrix());
    acc(i, cache.inputs_f[i], d_pre);
    if (i > 0) d_h = back(i, d_pre);
  }
}

Matrix atom_softmax(const Matrix& logits, int actions, int atoms) {
  Matrix p(logits.rows(), logits.cols());
  for (int j = 0; j < actions; ++j) {
    const auto block = logits.middleRows(j * atoms, atoms);
    const Eigen::RowVectorXd mx = block.colwise().maxCoeff();
    Matrix e = (block.rowwise() - mx).array().exp().matrix();
    const Eigen::RowVectorXd s = e.colwise().sum();
    for (Eigen::Index c = 0; c < e.cols(); ++c) e.col(c) /= s(c);
    p.middleRows(j * atoms, atoms) = e;
  }
  return p;
}

Matrix QNetwork::q_values(const Matrix& x) const {
  const Matrix out = forward(x);
  const int k = shape_.atoms;
  if (k == 1) return out;
  const Matrix p = atom_softmax(out, shape_.actions, k);
  const Eigen::Map<const Vector> z(support_.data(), k);
  Matrix q(shape_.actions, out.cols());
  for (int j = 0; j < shape_.actions; ++j) q.row(j) = z.transpose() * p.middleRows(j * k, k);
  return q;
}

std::array<double, kActionCount> QNetwork::q_values(const Observation& obs) const {
  if (shape_.actions != static_cast<int>(kActionCount)) throw ShapeError("network action count is not 2");
  const Eigen::Map<const Vector> x(obs.data(), static_cast<Eigen::Index>(obs.size()));
  const Matrix q = q_values(Matrix(x));
  return {q(0, 0), q(1, 0)};
}

void QNetwork::resample_noise(Rng& rng) {
  if (!shape_.noisy) return;
  mirror_valid_ = false;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.eps_in.size(); ++i) l.eps_in(i) = noise_transform(rng.normal());
    for (Eigen::Index i = 0; i < l.eps_out.size(); ++i) l.eps_out(i) = noise_transform(rng.normal());
  }
}

void QNetwork::clear_noise() {
  mirror_valid_ = false;
  for (auto& l : layers_) {
    l.eps_in.setZero();
    l.eps_out.setZero();
  }
}

ParamSet QNetwork::zeros_like() const {
  ParamSet p;
  for (const auto& l : layers_) {
    Linear z;
    z.w = Matrix::Zero(l.w.rows(), l.w.cols());
    z.b = Vector::Zero(l.b.size());
    z.sigma_w = Matrix::Zero(l.sigma_w.rows(), l.sigma_w.cols());
    z.sigma_b = Vector::Zero(l.sigma_b.size());
    p.layers.push_back(std::move(z));
  }
  return p;
}

bool operator==(const QNetwork& a, const QNetwork& b) {
  if (!(a.shape_ == b.shape_) || a.layers_.size() != b.layers_.size() || a.support_ != b.support_) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.w != y.w || x.b != y.b || x.sigma_w != y.sigma_w || x.sigma_b != y.sigma_b) return false;
  }
  return true;
}

Matrix to_matrix(const std::vector<Observation>& batch) {
  Matrix x(static_cast<Eigen::Index>(kObservationSize), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t c = 0; c < batch.size(); ++c) {
    for (std::size_t r = 0; r < kObservationSize; ++r) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = batch[c][r];
    }
  }
  return x;
}

}  // namespace mixtraffic::rl
