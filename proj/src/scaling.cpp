#include "steer/scaling.hpp"

#include <cassert>

namespace steer {

LinearFit LinearScale(const Eigen::ArrayXd& pred, const Eigen::ArrayXd& y)
{
    assert(pred.size() == y.size() && pred.size() > 0);
    const double n = static_cast<double>(pred.size());
    const double mp = pred.mean();
    const double my = y.mean();
    const Eigen::ArrayXd dp = pred - mp;
    const double var = dp.square().sum() / n;

    LinearFit fit;
    if (var < 1e-12) {
        fit.slope = 0.0;
        fit.intercept = my;
    } else {
        fit.slope = (dp * (y - my)).sum() / n / var;
        fit.intercept = my - fit.slope * mp;
    }
    fit.mse = (fit.intercept + fit.slope * pred - y).square().mean();
    return fit;
}

} // namespace steer
