#include "ganlab/gradcheck.hpp"

#include <cmath>

namespace ganlab {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
    if (h <= 0.0) throw Error("finite differences require a positive step");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double xi = x[i];
        probe[i] = xi + h;
        const double fp = f(probe);
        probe[i] = xi - h;
        const double fm = f(probe);
        probe[i] = xi;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
    if (!a.same_shape(b))
        throw ShapeError("relative error: shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace ganlab
