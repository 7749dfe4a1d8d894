#include "ebmgeo/optim.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace ebmgeo::optim {

void Adam::step(std::vector<ad::Tensor>& params, const ad::GradMap& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& p : params) {
        const ad::Node* key = p.node().get();
        const ad::Matrix* g = grads.find(key);
        if (g == nullptr) continue;  // unreached parameter: zero gradient
        auto it = state_.find(key);
        if (it == state_.end()) {
            it = state_
                     .emplace(key, Moments{ad::Matrix::Zero(p.rows(), p.cols()),
                                           ad::Matrix::Zero(p.rows(), p.cols())})
                     .first;
        }
        Moments& mo = it->second;
        mo.m = cfg_.beta1 * mo.m + (1.0 - cfg_.beta1) * (*g);
        mo.v = (cfg_.beta2 * mo.v.array() +
                (1.0 - cfg_.beta2) * g->array().square())
                   .matrix();
        ad::Matrix mhat = mo.m / bc1;
        ad::Matrix vhat = mo.v / bc2;
        p.mutable_value().array() -=
            cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
    }
}

LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& f,
    Eigen::VectorXd x0, const LbfgsConfig& cfg) {
    using Vec = Eigen::VectorXd;
    const Eigen::Index n = x0.size();
    Vec x = std::move(x0);
    Vec g(n), g_new(n);
    double fx = f(x, g);

    std::deque<Vec> s_hist, y_hist;
    std::deque<double> rho_hist;

    LbfgsResult out;
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= cfg.grad_tol) {
            out.converged = true;
            break;
        }

        // Two-loop recursion for the search direction.
        Vec q = g;
        const int m = static_cast<int>(s_hist.size());
        std::vector<double> alpha(m);
        for (int i = m - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (m > 0) {
            const double gamma = s_hist.back().dot(y_hist.back()) /
                                 y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (int i = 0; i < m; ++i) {
            double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Vec dir = -q;
        double dg = dir.dot(g);
        if (!(dg < 0.0)) {  // not a descent direction; fall back to steepest
            dir = -g;
            dg = -g.squaredNorm();
        }

        // Weak-Wolfe line search by bisection (sufficient decrease +
        // curvature). The curvature arm keeps s·y > 0, which an
        // Armijo-only search does not guarantee and which stale history
        // pairs need.
        double lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double step = 1.0;
        double f_new = fx;
        Vec x_new;
        bool accepted = false;
        for (int ls = 0; ls < cfg.max_line_steps; ++ls) {
            x_new = x + step * dir;
            f_new = f(x_new, g_new);
            if (!std::isfinite(f_new) ||
                f_new > fx + cfg.armijo_c1 * step * dg) {
                hi = step;  // too long
            } else if (g_new.dot(dir) < cfg.wolfe_c2 * dg) {
                lo = step;  // too short (curvature not yet satisfied)
            } else {
                accepted = true;
                break;
            }
            step = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * step;
        }
        if (!accepted && lo > 0.0) {
            // Sufficient decrease was available even though curvature
            // never held; take that point and move on.
            step = lo;
            x_new = x + step * dir;
            f_new = f(x_new, g_new);
            accepted = true;
        }
        if (!accepted) break;  // no usable step: keep best-so-far

        Vec s = x_new - x;
        Vec y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > cfg.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        } else {
            // Curvature pair unusable: the local model is stale.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        const double decrease = fx - f_new;
        x = std::move(x_new);
        g = g_new;
        const bool tiny =
            decrease <= cfg.rel_f_tol * (std::abs(fx) + 1e-30);
        fx = f_new;
        if (tiny) {
            out.converged = true;
            ++it;
            break;
        }
    }

    out.x = std::move(x);
    out.f = fx;
    out.iters = it;
    return out;
}

}  // namespace ebmgeo::optim
