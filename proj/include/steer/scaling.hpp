#pragma once

#include <Eigen/Dense>

namespace steer {

struct LinearFit {
    double intercept = 0.0; // a
    double slope = 0.0;     // b
    double mse = 0.0;
};

// Least-squares a, b minimizing mean((a + b * pred - y)^2). When pred has
// variance below 1e-12 the slope is 0 and the intercept is mean(y).
LinearFit LinearScale(const Eigen::ArrayXd& pred, const Eigen::ArrayXd& y);

inline Eigen::ArrayXd ApplyScale(const LinearFit& fit, const Eigen::ArrayXd& pred)
{
    return fit.intercept + fit.slope * pred;
}

} // namespace steer
