#include "arae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace arae {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
}

namespace {

double eval_scalar(const ScalarFn& f, const Tensor64& x) {
  Tape<double> tape;
  auto out = f(tape, tape.constant(x));
  const double v = out.value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function is non-finite");
  return v;
}

double eval_loss(const LossFn& loss) {
  Tape<double> tape;
  const double v = loss(tape).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is non-finite");
  return v;
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor64& x, double step) {
  Tape<double> tape;
  auto xv = tape.variable(x);
  auto out = f(tape, xv);
  if (!std::isfinite(out.value().item())) throw NumericError("grad_check: function is non-finite");
  tape.backward(out);
  const Tensor64 analytic = xv.grad();

  double worst = 0.0;
  Tensor64 probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = eval_scalar(f, probe);
    probe[i] = orig - step;
    const double fm = eval_scalar(f, probe);
    probe[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * step)));
  }
  return worst;
}

double grad_check_params(const LossFn& loss, std::span<Parameter<double>* const> params,
                         std::size_t max_coords, SeededRng& rng, double step) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto out = loss(tape);
    if (!std::isfinite(out.value().item())) throw NumericError("grad_check: loss is non-finite");
    tape.backward(out);
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) coords.emplace_back(p, i);
  }
  if (coords.size() > max_coords) {
    rng.shuffle(coords.begin(), coords.end());
    coords.resize(max_coords);
  }

  double worst = 0.0;
  for (auto [p, i] : coords) {
    auto& v = params[p]->value[i];
    const double analytic = params[p]->ensure_grad()[i];
    const double orig = v;
    v = orig + step;
    const double fp = eval_loss(loss);
    v = orig - step;
    const double fm = eval_loss(loss);
    v = orig;
    worst = std::max(worst, relative_error(analytic, (fp - fm) / (2.0 * step)));
  }
  return worst;
}

}  // namespace arae
