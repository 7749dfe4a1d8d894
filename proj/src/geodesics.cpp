#include "ebmgeo/geodesics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ebmgeo/common.hpp"
#include "ebmgeo/io/csv.hpp"
#include "ebmgeo/optim.hpp"

namespace ebmgeo::geo {

namespace {

using ad::Matrix;
using ad::Tensor;

void require_endpoint_shapes(const Eigen::RowVectorXd& x0,
                             const Eigen::RowVectorXd& x1, const char* who) {
    if (x0.size() != x1.size())
        throw ShapeError(std::string(who) + ": endpoint dimensions differ");
    if (x0.size() == 0) throw ShapeError(std::string(who) + ": empty endpoints");
}

}  // namespace

ad::Matrix GeodesicPath::velocities() const {
    const Eigen::Index n = points.rows() - 1;
    return (points.bottomRows(n) - points.topRows(n)) / dt();
}

double GeodesicPath::euclidean_length() const {
    const Eigen::Index n = points.rows() - 1;
    return (points.bottomRows(n) - points.topRows(n)).rowwise().norm().sum();
}

PathStats path_stats(const GeodesicPath& p, const metric::MetricField& m) {
    if (p.T() < 2) throw ShapeError("path_stats: need at least two points");
    const Eigen::Index n = p.T() - 1;
    const Matrix v = p.velocities();
    const Matrix lam = m.eval_batch(p.points.topRows(n));

    PathStats st;
    st.speeds.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        double sq;
        if (m.kind == metric::Kind::Conformal)
            sq = lam(t, 0) * v.row(t).squaredNorm();
        else
            sq = (lam.row(t).array() * v.row(t).array().square()).sum();
        st.speeds[t] = std::sqrt(sq);
    }
    const double dt = p.dt();
    st.kinetic = 0.5 * st.speeds.array().square().sum() * dt;
    st.riemannian_length = st.speeds.sum() * dt;
    st.euclidean_length = p.euclidean_length();
    const double mean = st.speeds.mean();
    const double var = (st.speeds.array() - mean).square().mean();
    st.speed_cv = mean > 0.0 ? std::sqrt(var) / mean : 0.0;
    return st;
}

GeodesicPath assemble_path(const Eigen::RowVectorXd& x0,
                           const Eigen::RowVectorXd& x1, const ad::Matrix& phi) {
    require_endpoint_shapes(x0, x1, "assemble_path");
    if (phi.rows() < 2) throw ShapeError("assemble_path: need T >= 2 rows of phi");
    if (phi.cols() != x0.size())
        throw ShapeError("assemble_path: phi dimension mismatch");
    if (!phi.allFinite())
        throw std::invalid_argument("assemble_path: non-finite correction");

    const Eigen::Index T = phi.rows();
    GeodesicPath p;
    p.points.resize(T, x0.size());
    for (Eigen::Index k = 0; k < T; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(T - 1);
        p.points.row(k) =
            (1.0 - t) * x0 + t * x1 + 2.0 * t * (1.0 - t) * phi.row(k);
    }
    p.points.row(0) = x0;
    p.points.row(T - 1) = x1;
    return p;
}

GeodesicPath straight_line(const Eigen::RowVectorXd& x0,
                           const Eigen::RowVectorXd& x1, Eigen::Index T) {
    if (T < 2) throw ShapeError("straight_line: need T >= 2");
    return assemble_path(x0, x1, Matrix::Zero(T, x0.size()));
}

ad::Tensor kinetic_energy_op(const ad::Tensor& flat, Eigen::Index T,
                             Eigen::Index B, const metric::MetricField& m) {
    if (T < 2) throw ShapeError("kinetic_energy: need T >= 2");
    if (B < 1) throw ShapeError("kinetic_energy: need B >= 1");
    if (flat.rows() != T * B)
        throw ShapeError("kinetic_energy: flattened path row count mismatch");

    const Eigen::Index nb = (T - 1) * B;
    const double dt = 1.0 / static_cast<double>(T - 1);
    Tensor cur = ad::slice_rows(flat, 0, nb);
    Tensor nxt = ad::slice_rows(flat, B, nb);
    Tensor v = ad::mul(ad::sub(nxt, cur), Tensor::scalar(1.0 / dt));
    Tensor lam = m.op(cur);
    Tensor e = m.kind == metric::Kind::Conformal
                   ? ad::mul(ad::sqnorm(v), lam)
                   : ad::row_sum(ad::mul(ad::square(v), lam));
    return ad::mul(ad::sum(e),
                   Tensor::scalar(0.5 * dt / static_cast<double>(B)));
}

double kinetic_energy(const GeodesicPath& p, const metric::MetricField& m) {
    return kinetic_energy_op(Tensor::constant(p.points), p.T(), 1, m)
        .scalar_value();
}

ad::Tensor interpolant_paths_op(const nets::InterpolantNet& net,
                                const ad::Matrix& x0s, const ad::Matrix& x1s,
                                Eigen::Index T) {
    if (T < 2) throw ShapeError("interpolant_paths: need T >= 2");
    if (x0s.rows() != x1s.rows() || x0s.cols() != x1s.cols())
        throw ShapeError("interpolant_paths: endpoint batch shapes differ");
    const Eigen::Index B = x0s.rows();
    const Eigen::Index D = x0s.cols();
    if (B < 1) throw ShapeError("interpolant_paths: empty batch");

    // t-major flattening: row t*B + b.
    Matrix input(T * B, 2 * D + 1);
    Matrix base(T * B, D);
    Matrix coef(T * B, 1);
    for (Eigen::Index k = 0; k < T; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(T - 1);
        for (Eigen::Index b = 0; b < B; ++b) {
            const Eigen::Index r = k * B + b;
            input.block(r, 0, 1, D) = x0s.row(b);
            input.block(r, D, 1, D) = x1s.row(b);
            input(r, 2 * D) = t;
            base.row(r) = (1.0 - t) * x0s.row(b) + t * x1s.row(b);
            coef(r, 0) = 2.0 * t * (1.0 - t);
        }
    }
    Tensor phi = net.forward(Tensor::constant(input));
    return ad::add(Tensor::constant(base),
                   ad::scale_rows(phi, Tensor::constant(coef)));
}

GeodesicPath interpolant_path(const nets::InterpolantNet& net,
                              const Eigen::RowVectorXd& x0,
                              const Eigen::RowVectorXd& x1, Eigen::Index T) {
    return interpolant_paths(net, Matrix(x0), Matrix(x1), T).front();
}

std::vector<GeodesicPath> interpolant_paths(const nets::InterpolantNet& net,
                                            const ad::Matrix& x0s,
                                            const ad::Matrix& x1s,
                                            Eigen::Index T) {
    const Matrix flat = interpolant_paths_op(net, x0s, x1s, T).value();
    const Eigen::Index B = x0s.rows();
    std::vector<GeodesicPath> out(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) {
        GeodesicPath& p = out[static_cast<std::size_t>(b)];
        p.points.resize(T, x0s.cols());
        for (Eigen::Index k = 0; k < T; ++k) p.points.row(k) = flat.row(k * B + b);
        // The 2t(1-t) factor zeroes the correction at the ends already;
        // re-pin to be safe against accumulated rounding.
        p.points.row(0) = x0s.row(b);
        p.points.row(T - 1) = x1s.row(b);
    }
    return out;
}

InterpolantTrainResult train_interpolant(const ad::Matrix& data,
                                         nets::InterpolantNet& net,
                                         const metric::MetricField& m,
                                         const InterpolantTrainConfig& cfg,
                                         const std::string& log_csv) {
    if (data.rows() < 2) throw ConfigError("train_interpolant: need >= 2 data points");
    if (data.cols() != net.dim)
        throw ConfigError("train_interpolant: data/net dimension mismatch");
    if (cfg.T < 2) throw ConfigError("train_interpolant: T must be >= 2");
    if (cfg.batch < 1) throw ConfigError("train_interpolant: batch must be positive");
    if (cfg.steps < 0) throw ConfigError("train_interpolant: negative step count");

    rng::Stream pair_rs = rng::derive(cfg.seed, "interpolant/pairs");
    std::vector<Tensor> params = net.parameters();
    optim::Adam adam({cfg.lr, 0.9, 0.999, 1e-8});

    InterpolantTrainResult result;
    const Eigen::Index n = data.rows();
    Matrix x0s(cfg.batch, data.cols());
    Matrix x1s(cfg.batch, data.cols());
    for (int step = 0; step < cfg.steps; ++step) {
        if (cfg.cosine_lr)
            adam.set_lr(cfg.lr * 0.5 *
                        (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                        static_cast<double>(cfg.steps))));
        for (int b = 0; b < cfg.batch; ++b) {
            const Eigen::Index i = static_cast<Eigen::Index>(pair_rs.integer(n));
            Eigen::Index j = i;
            while (j == i) j = static_cast<Eigen::Index>(pair_rs.integer(n));
            x0s.row(b) = data.row(i);
            x1s.row(b) = data.row(j);
        }
        Tensor flat = interpolant_paths_op(net, x0s, x1s, cfg.T);
        Tensor loss = kinetic_energy_op(flat, cfg.T, cfg.batch, m);
        const double value = loss.scalar_value();
        if (!std::isfinite(value))
            throw NumericalError("train_interpolant: loss diverged (" +
                                 std::to_string(value) + ") at step " +
                                 std::to_string(step));
        if (step % cfg.log_every == 0 || step == cfg.steps - 1)
            result.log.emplace_back(step, value);
        result.final_loss = value;
        ad::GradMap grads = ad::backward(loss);
        adam.step(params, grads);
    }

    if (!log_csv.empty()) {
        std::vector<std::vector<std::string>> rows;
        rows.reserve(result.log.size());
        for (const auto& [step, value] : result.log)
            rows.push_back({std::to_string(step), io::fmt_g17(value)});
        io::write_csv(log_csv, {"step", "loss"}, rows);
    }
    return result;
}

WaypointResult optimize_waypoints(const Eigen::RowVectorXd& x0,
                                  const Eigen::RowVectorXd& x1,
                                  const metric::MetricField& m, Eigen::Index T,
                                  const WaypointConfig& cfg) {
    require_endpoint_shapes(x0, x1, "optimize_waypoints");
    if (T < 2) throw ShapeError("optimize_waypoints: need T >= 2");
    const Eigen::Index D = x0.size();

    WaypointResult result;
    if (T == 2) {
        result.path = straight_line(x0, x1, T);
        result.energy = kinetic_energy(result.path, m);
        result.converged = true;
        return result;
    }

    const GeodesicPath init = straight_line(x0, x1, T);
    const Eigen::Index nz = T - 2;
    Eigen::VectorXd z0(nz * D);
    for (Eigen::Index k = 0; k < nz; ++k)
        z0.segment(k * D, D) = init.points.row(k + 1).transpose();

    const Tensor row0 = Tensor::constant(x0);
    const Tensor row1 = Tensor::constant(x1);
    auto objective = [&](const Eigen::VectorXd& zv, Eigen::VectorXd& grad) {
        Matrix zm(nz, D);
        for (Eigen::Index k = 0; k < nz; ++k)
            zm.row(k) = zv.segment(k * D, D).transpose();
        try {
            Tensor z = Tensor::leaf(zm);
            Tensor flat = ad::concat_rows({row0, z, row1});
            Tensor e = kinetic_energy_op(flat, T, 1, m);
            ad::GradMap gm = ad::backward(e);
            const Matrix gz = ad::gradient(gm, z);
            for (Eigen::Index k = 0; k < nz; ++k)
                grad.segment(k * D, D) = gz.row(k).transpose();
            return e.scalar_value();
        } catch (const NumericalError&) {
            // Trial point wandered somewhere the metric cannot be
            // evaluated (e.g. an unclamped inverse form where the density
            // underflows). Report an infinite barrier so the line search
            // backtracks.
            grad.setZero();
            return std::numeric_limits<double>::infinity();
        }
    };

    optim::LbfgsConfig lcfg;
    lcfg.max_iters = cfg.max_iters;
    lcfg.grad_tol = cfg.grad_tol;
    optim::LbfgsResult res = optim::lbfgs_minimize(objective, z0, lcfg);

    Matrix pts(T, D);
    pts.row(0) = x0;
    for (Eigen::Index k = 0; k < nz; ++k)
        pts.row(k + 1) = res.x.segment(k * D, D).transpose();
    pts.row(T - 1) = x1;
    result.path = GeodesicPath{pts};
    result.energy = res.f;
    result.iters = res.iters;
    result.converged = res.converged;
    return result;
}

Eigen::VectorXd geodesic_ode_rhs(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& v,
                                 const ScoreFn& score) {
    const Eigen::VectorXd s = score(x);
    return s.dot(v) * v - 0.5 * v.squaredNorm() * s;
}

GeodesicPath integrate_geodesic(const Eigen::RowVectorXd& x0,
                                const Eigen::VectorXd& v0,
                                const ScoreFn& score, Eigen::Index T,
                                int substeps) {
    if (T < 2) throw ShapeError("integrate_geodesic: need T >= 2");
    if (substeps < 1) throw ConfigError("integrate_geodesic: substeps must be positive");

    const double h = 1.0 / static_cast<double>((T - 1) * substeps);
    Eigen::VectorXd x = x0.transpose();
    Eigen::VectorXd v = v0;
    GeodesicPath p;
    p.points.resize(T, x0.size());
    p.points.row(0) = x0;
    for (Eigen::Index k = 1; k < T; ++k) {
        // An exploded state never recovers; mark the remaining nodes and
        // let the caller's finiteness checks reject the trajectory.
        if (!x.allFinite() || !v.allFinite()) {
            p.points.bottomRows(T - k).setConstant(
                std::numeric_limits<double>::quiet_NaN());
            return p;
        }
        for (int s = 0; s < substeps; ++s) {
            const Eigen::VectorXd k1x = v;
            const Eigen::VectorXd k1v = geodesic_ode_rhs(x, v, score);
            const Eigen::VectorXd k2x = v + 0.5 * h * k1v;
            const Eigen::VectorXd k2v =
                geodesic_ode_rhs(x + 0.5 * h * k1x, v + 0.5 * h * k1v, score);
            const Eigen::VectorXd k3x = v + 0.5 * h * k2v;
            const Eigen::VectorXd k3v =
                geodesic_ode_rhs(x + 0.5 * h * k2x, v + 0.5 * h * k2v, score);
            const Eigen::VectorXd k4x = v + h * k3v;
            const Eigen::VectorXd k4v =
                geodesic_ode_rhs(x + h * k3x, v + h * k3v, score);
            x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        p.points.row(k) = x.transpose();
    }
    return p;
}

ShootResult shoot_geodesic(const Eigen::RowVectorXd& x0,
                           const Eigen::RowVectorXd& x1,
                           const density::MixtureDensity& d, Eigen::Index T,
                           const ShootConfig& cfg) {
    require_endpoint_shapes(x0, x1, "shoot_geodesic");
    if (T < 2) throw ShapeError("shoot_geodesic: need T >= 2");

    const Eigen::Index D = x0.size();
    // Overflowing trial velocities push RK4 stage points to inf within a
    // single substep; report NaN instead of tripping the exact score's
    // finiteness guard, so such probes fail the Newton checks gracefully.
    const ScoreFn score = [&d, D](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        if (!x.allFinite())
            return Eigen::VectorXd::Constant(
                D, std::numeric_limits<double>::quiet_NaN());
        return density::score(d, x);
    };
    const Eigen::VectorXd straight = (x1 - x0).transpose();
    const double scale = std::max(straight.norm(), 1e-12);

    // Selection energy: the uncalibrated 1/p conformal metric.
    const metric::MetricField g_invp = metric::oracle_metrics(d).second;

    auto endpoint = [&](const Eigen::VectorXd& v0) {
        return integrate_geodesic(x0, v0, score, T, cfg.substeps)
            .x1()
            .transpose()
            .eval();
    };

    bool have_best = false;
    ShootResult best;
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        rng::Stream rs = rng::derive(cfg.seed, "shoot/restart",
                                     static_cast<std::uint64_t>(restart));
        Eigen::VectorXd v = straight;
        if (restart > 0) v += 0.3 * scale * rs.normal_matrix(D, 1);

        Eigen::VectorXd r = endpoint(v) - x1.transpose();
        bool ok = r.allFinite();
        for (int iter = 0; ok && iter < cfg.max_iters && r.norm() > cfg.tol;
             ++iter) {
            // Finite-difference Jacobian of the endpoint miss.
            Eigen::MatrixXd J(D, D);
            const double eps = 1e-6 * std::max(1.0, v.norm());
            for (Eigen::Index c = 0; c < D; ++c) {
                Eigen::VectorXd vp = v, vm = v;
                vp[c] += eps;
                vm[c] -= eps;
                J.col(c) = (endpoint(vp) - endpoint(vm)) / (2.0 * eps);
            }
            const Eigen::VectorXd dv = J.partialPivLu().solve(-r);
            if (!dv.allFinite()) {
                ok = false;
                break;
            }
            // Damped update: halve until the miss shrinks.
            double damp = 1.0;
            bool improved = false;
            for (int half = 0; half < 8; ++half) {
                const Eigen::VectorXd r_try = endpoint(v + damp * dv) - x1.transpose();
                if (r_try.allFinite() && r_try.norm() < r.norm()) {
                    v += damp * dv;
                    r = r_try;
                    improved = true;
                    break;
                }
                damp *= 0.5;
            }
            if (!improved) break;
        }

        if (!ok || !r.allFinite() || r.norm() > cfg.tol) continue;
        GeodesicPath path = integrate_geodesic(x0, v, score, T, cfg.substeps);
        const double miss = (path.x1() - x1).norm();
        path.points.row(T - 1) = x1;  // snap the residual miss
        const double energy = kinetic_energy(path, g_invp);
        if (!have_best || energy < best.energy) {
            best.path = path;
            best.miss = miss;
            best.energy = energy;
            best.restarts_used = restart + 1;
            have_best = true;
        }
    }
    if (!have_best)
        throw NumericalError(
            "shoot_geodesic: no restart converged to the target endpoint; "
            "fall back to optimize_waypoints (multimodal densities can "
            "defeat shooting)");
    return best;
}

void write_paths_csv(const std::string& path,
                     const std::vector<GeodesicPath>& paths) {
    if (paths.empty()) throw ConfigError("write_paths_csv: no paths");
    const Eigen::Index D = paths.front().dim();
    std::vector<std::string> columns = {"pair_id", "t"};
    for (Eigen::Index j = 0; j < D; ++j)
        columns.push_back("x" + std::to_string(j));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t id = 0; id < paths.size(); ++id) {
        const GeodesicPath& p = paths[id];
        if (p.dim() != D)
            throw ShapeError("write_paths_csv: mixed path dimensions");
        for (Eigen::Index k = 0; k < p.T(); ++k) {
            std::vector<std::string> row = {
                std::to_string(id),
                io::fmt_g17(static_cast<double>(k) /
                            static_cast<double>(p.T() - 1))};
            for (Eigen::Index j = 0; j < D; ++j)
                row.push_back(io::fmt_g17(p.points(k, j)));
            rows.push_back(std::move(row));
        }
    }
    io::write_csv(path, columns, rows);
}

}  // namespace ebmgeo::geo
