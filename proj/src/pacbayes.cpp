#include "msbl/pacbayes.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace msbl {

NumericalExample reproduce_numerical_example(NumericalExample r) {
  if (r.learned < 0 || r.learned > r.dim) throw Error("numerical example: learned count outside [0, dim]");
  if (r.horizon < 1) throw Error("numerical example: horizon must be >= 1");
  using G = Gaussian<double>;
  const Vector mu_q = Vector::Zero(r.dim);
  const Vector mu_p0 = Vector::Zero(r.dim);
  const G q = G::isotropic(mu_q, r.target_variance);
  const G p0 = G::isotropic(mu_p0, r.prior_variance);

  // Informed prior: learned coordinates at the target's mean and the micro
  // variance, the rest left at the uninformed prior.
  Vector mean_l1 = mu_p0, var_l1 = Vector::Constant(r.dim, r.prior_variance);
  mean_l1.head(r.learned) = mu_q.head(r.learned);
  var_l1.head(r.learned).setConstant(r.micro_variance);
  const G p_l1 = G::diagonal(mean_l1, var_l1);

  const auto s = sample_savings(q, p0, p_l1, r.c);
  r.kl_uninformed = gaussian_kl(q, p0);
  r.n0 = s.n0;
  r.n_l2 = s.n_l2;
  // Micro-level posterior: same construction as the informed prior.
  r.n_l1 = r.c * gaussian_kl(p_l1, p0);
  r.reduction = s.relative;
  r.reduction_with_l1 = (r.n0 - r.n_l2 - r.n_l1 / r.horizon) / r.n0;
  return r;
}

std::string format_report_text(const NumericalExample& r) {
  std::ostringstream out;
  out << std::fixed;
  out << "dimension                 " << r.dim << " (" << r.learned << " learned at L1)\n";
  out << "prior / target / micro var " << std::setprecision(1) << r.prior_variance << " / " << r.target_variance
      << " / " << r.micro_variance << '\n';
  out << "c                         " << std::setprecision(0) << r.c << '\n';
  out << "horizon T                 " << r.horizon << '\n';
  out << "KL(Q || P0)               " << std::setprecision(4) << r.kl_uninformed << '\n';
  out << "n0                        " << std::setprecision(1) << r.n0 << '\n';
  out << "n_L2                      " << r.n_l2 << '\n';
  out << "n_L1                      " << r.n_l1 << '\n';
  out << "reduction                 " << std::setprecision(2) << 100.0 * r.reduction << "%\n";
  out << "reduction with L1 cost    " << 100.0 * r.reduction_with_l1 << "%\n";
  return out.str();
}

std::string format_report_json(const NumericalExample& r) {
  const nlohmann::ordered_json j = {{"dim", r.dim},
                                    {"learned", r.learned},
                                    {"prior_variance", r.prior_variance},
                                    {"target_variance", r.target_variance},
                                    {"micro_variance", r.micro_variance},
                                    {"c", r.c},
                                    {"horizon", r.horizon},
                                    {"kl_uninformed", r.kl_uninformed},
                                    {"n0", r.n0},
                                    {"n_l2", r.n_l2},
                                    {"n_l1", r.n_l1},
                                    {"reduction", r.reduction},
                                    {"reduction_with_l1", r.reduction_with_l1}};
  return j.dump(2);
}

}  // namespace msbl
