#ifndef MSBL_NETWORK_HPP_
#define MSBL_NETWORK_HPP_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msbl/core.hpp"
#include "msbl/rng.hpp"

namespace msbl {

/// Fully connected ReLU network producing one logit per action.
/// Parameters are one flat vector: for each layer, the weight matrix
/// (row-major, out x in) followed by the bias.
struct NetworkSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int output_dim = 1;

  int layer_count() const { return static_cast<int>(hidden_dims.size()) + 1; }
  int fan_in(int layer) const { return layer == 0 ? input_dim : hidden_dims[layer - 1]; }
  int fan_out(int layer) const { return layer == layer_count() - 1 ? output_dim : hidden_dims[layer]; }
  Eigen::Index parameter_count() const;
  /// e.g. "5-32-32-10".
  std::string descriptor() const;
  static NetworkSpec from_descriptor(const std::string& text);
  void validate() const;
};

template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {

template <typename Scalar>
using ConstWeights = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using Weights = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline void check_shapes(const NetworkSpec& spec, Eigen::Index params, Eigen::Index input) {
  if (params != spec.parameter_count())
    throw Error("network: parameter vector has " + std::to_string(params) + " entries, spec needs " +
                std::to_string(spec.parameter_count()));
  if (input != spec.input_dim)
    throw Error("network: input has " + std::to_string(input) + " entries, spec needs " +
                std::to_string(spec.input_dim));
}

}  // namespace detail

/// Logits of the network at `input`.
template <typename Scalar>
VectorT<Scalar> forward(const NetworkSpec& spec, const VectorT<Scalar>& theta, const VectorT<Scalar>& input) {
  detail::check_shapes(spec, theta.size(), input.size());
  VectorT<Scalar> act = input;
  Eigen::Index offset = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int in = spec.fan_in(l), out = spec.fan_out(l);
    detail::ConstWeights<Scalar> w(theta.data() + offset, out, in);
    offset += Eigen::Index{out} * in;
    VectorT<Scalar> z = w * act + theta.segment(offset, out);
    offset += out;
    if (l + 1 < spec.layer_count()) z = z.cwiseMax(Scalar(0));
    act = std::move(z);
  }
  return act;
}

/// Gradient of `upstream . forward(theta, input)` with respect to theta.
template <typename Scalar>
VectorT<Scalar> backward(const NetworkSpec& spec, const VectorT<Scalar>& theta, const VectorT<Scalar>& input,
                         const VectorT<Scalar>& upstream) {
  detail::check_shapes(spec, theta.size(), input.size());
  if (upstream.size() != spec.output_dim) throw Error("network: upstream gradient has wrong length");
  const int layers = spec.layer_count();
  std::vector<VectorT<Scalar>> acts;  // inputs to each layer
  std::vector<Eigen::Index> offsets;
  acts.reserve(layers);
  acts.push_back(input);
  Eigen::Index offset = 0;
  for (int l = 0; l < layers; ++l) {
    const int in = spec.fan_in(l), out = spec.fan_out(l);
    offsets.push_back(offset);
    detail::ConstWeights<Scalar> w(theta.data() + offset, out, in);
    offset += Eigen::Index{out} * in;
    VectorT<Scalar> z = w * acts.back() + theta.segment(offset, out);
    offset += out;
    if (l + 1 < layers) acts.push_back(z.cwiseMax(Scalar(0)));
  }
  VectorT<Scalar> grad = VectorT<Scalar>::Zero(theta.size());
  VectorT<Scalar> delta = upstream;
  for (int l = layers - 1; l >= 0; --l) {
    const int in = spec.fan_in(l), out = spec.fan_out(l);
    detail::Weights<Scalar> gw(grad.data() + offsets[l], out, in);
    gw.noalias() = delta * acts[l].transpose();
    grad.segment(offsets[l] + Eigen::Index{out} * in, out) = delta;
    if (l > 0) {
      detail::ConstWeights<Scalar> w(theta.data() + offsets[l], out, in);
      VectorT<Scalar> back = w.transpose() * delta;
      // ReLU derivative from the post-activation value.
      delta = (acts[l].array() > Scalar(0)).select(back, VectorT<Scalar>::Zero(in));
    }
  }
  return grad;
}

/// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases zero.
Vector init_parameters(const NetworkSpec& spec, Rng& rng);

}  // namespace msbl

#endif  // MSBL_NETWORK_HPP_
