#include "msbl/network.hpp"

#include <cmath>
#include <sstream>

namespace msbl {

Eigen::Index NetworkSpec::parameter_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < layer_count(); ++l) n += Eigen::Index{fan_out(l)} * (fan_in(l) + 1);
  return n;
}

std::string NetworkSpec::descriptor() const {
  std::ostringstream s;
  s << input_dim;
  for (int h : hidden_dims) s << '-' << h;
  s << '-' << output_dim;
  return s.str();
}

NetworkSpec NetworkSpec::from_descriptor(const std::string& text) {
  std::vector<int> dims;
  std::istringstream s(text);
  std::string part;
  while (std::getline(s, part, '-')) {
    try {
      dims.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw Error("bad network descriptor '" + text + "'");
    }
  }
  if (dims.size() < 2) throw Error("bad network descriptor '" + text + "'");
  NetworkSpec spec;
  spec.input_dim = dims.front();
  spec.output_dim = dims.back();
  spec.hidden_dims.assign(dims.begin() + 1, dims.end() - 1);
  spec.validate();
  return spec;
}

void NetworkSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw Error("network dims must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw Error("network hidden dims must be >= 1");
}

Vector init_parameters(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  Vector theta = Vector::Zero(spec.parameter_count());
  Eigen::Index offset = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int in = spec.fan_in(l), out = spec.fan_out(l);
    const double a = std::sqrt(6.0 / (in + out));
    for (Eigen::Index i = 0; i < Eigen::Index{out} * in; ++i) theta(offset + i) = rng.uniform(-a, a);
    offset += Eigen::Index{out} * (in + 1);
  }
  return theta;
}

}  // namespace msbl
