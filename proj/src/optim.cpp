#include "enscal/optim.hpp"

#include <cmath>

namespace enscal {

namespace {

double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

OptimResult minimize_bfgs(const Objective& f, std::vector<double> x0, int max_iterations,
                          double grad_tol) {
    const std::size_t n = x0.size();
    OptimResult res;
    res.x = std::move(x0);

    std::vector<double> g(n), g_new(n), d(n), s(n), y(n), hy(n), x_new(n);
    std::vector<double> H(n * n, 0.0);  // inverse Hessian approximation
    for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;

    double fx = f(res.x, g);
    if (!std::isfinite(fx)) {
        res.value = fx;
        return res;
    }

    for (int iter = 0; iter < max_iterations; ++iter) {
        res.iterations = iter + 1;
        if (inf_norm(g) <= grad_tol * std::max(1.0, std::fabs(fx))) {
            res.converged = true;
            break;
        }

        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += H[i * n + j] * g[j];
            d[i] = -acc;
        }
        double gd = dot(g, d);
        if (gd >= 0.0) {  // not a descent direction: reset to steepest descent
            for (std::size_t i = 0; i < n * n; ++i) H[i] = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                H[i * n + i] = 1.0;
                d[i] = -g[i];
            }
            gd = dot(g, d);
        }

        // Armijo backtracking
        double step = 1.0;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + step * d[i];
            f_new = f(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * gd) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no progress possible along this direction

        double s_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - res.x[i];
            y[i] = g_new[i] - g[i];
            s_norm = std::max(s_norm, std::fabs(s[i]));
        }
        res.x = x_new;
        fx = f_new;
        g = g_new;
        if (s_norm < 1e-12 * std::max(1.0, inf_norm(res.x))) {
            res.converged = true;
            break;
        }

        const double sy = dot(s, y);
        if (sy > 1e-12) {  // curvature condition, else skip the update
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += H[i * n + j] * y[j];
                hy[i] = acc;
            }
            const double yhy = dot(y, hy);
            const double c1 = (sy + yhy) / (sy * sy);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    H[i * n + j] += c1 * s[i] * s[j] - (hy[i] * s[j] + s[i] * hy[j]) / sy;
        }
    }
    res.value = fx;
    return res;
}

}  // namespace enscal
