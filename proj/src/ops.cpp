#include "ebmgeo/ops.hpp"

#include <cmath>
#include <tuple>

namespace ebmgeo::ad {

namespace {

Tensor make_op(Matrix value, std::vector<NodePtr> parents,
               std::function<void(const Matrix&, GradMap&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->order = Node::next_order();
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        // Constants drop their history entirely; the graph only retains
        // what backward can reach.
        n->parents = std::move(parents);
        n->backward = std::move(bw);
    }
    return Tensor(std::move(n));
}

enum class Bcast { None, AScalar, BScalar, ARow, BRow };

Bcast classify(const Tensor& a, const Tensor& b, const char* opname) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::None;
    if (a.is_scalar()) return Bcast::AScalar;
    if (b.is_scalar()) return Bcast::BScalar;
    if (a.rows() == 1 && a.cols() == b.cols()) return Bcast::ARow;
    if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::BRow;
    throw ShapeError(std::string(opname) + ": shapes " +
                     shape_str(a.rows(), a.cols()) + " and " +
                     shape_str(b.rows(), b.cols()) +
                     " do not conform (only a leading batch dimension may "
                     "broadcast)");
}

// Sum an output-shaped gradient back down to a broadcast operand's shape.
Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    if (rows == 1 && cols == 1) {
        Matrix r(1, 1);
        r(0, 0) = g.sum();
        return r;
    }
    // row-broadcast operand [1, D]
    return g.colwise().sum();
}

// Expand an operand's value to the output shape (for product rules).
Matrix expand_to(const Matrix& v, const Matrix& like) {
    if (v.rows() == like.rows() && v.cols() == like.cols()) return v;
    if (v.rows() == 1 && v.cols() == 1)
        return Matrix::Constant(like.rows(), like.cols(), v(0, 0));
    return v.replicate(like.rows(), 1);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    Bcast bc = classify(a, b, "add");
    Matrix v;
    switch (bc) {
        case Bcast::None: v = a.value() + b.value(); break;
        case Bcast::AScalar:
            v = (b.value().array() + a.value()(0, 0)).matrix();
            break;
        case Bcast::BScalar:
            v = (a.value().array() + b.value()(0, 0)).matrix();
            break;
        case Bcast::ARow: v = b.value().rowwise() + a.value().row(0); break;
        case Bcast::BRow: v = a.value().rowwise() + b.value().row(0); break;
    }
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    const Eigen::Index ar = a.rows(), ac = a.cols(), br = b.rows(),
                       bcl = b.cols();
    return make_op(std::move(v), {a.node(), b.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (pa->requires_grad)
                           gm.accumulate(pa, reduce_to(g, ar, ac));
                       if (pb->requires_grad)
                           gm.accumulate(pb, reduce_to(g, br, bcl));
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Bcast bc = classify(a, b, "sub");
    Matrix v;
    switch (bc) {
        case Bcast::None: v = a.value() - b.value(); break;
        case Bcast::AScalar:
            v = (a.value()(0, 0) - b.value().array()).matrix();
            break;
        case Bcast::BScalar:
            v = (a.value().array() - b.value()(0, 0)).matrix();
            break;
        case Bcast::ARow:
            v = (-b.value()).rowwise() + a.value().row(0);
            break;
        case Bcast::BRow: v = a.value().rowwise() - b.value().row(0); break;
    }
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    const Eigen::Index ar = a.rows(), ac = a.cols(), br = b.rows(),
                       bcl = b.cols();
    return make_op(std::move(v), {a.node(), b.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (pa->requires_grad)
                           gm.accumulate(pa, reduce_to(g, ar, ac));
                       if (pb->requires_grad)
                           gm.accumulate(pb, reduce_to(Matrix(-g), br, bcl));
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    classify(a, b, "mul");
    // Output takes the non-broadcast operand's shape.
    const Matrix& ref = (a.rows() >= b.rows() && a.cols() >= b.cols())
                            ? a.value()
                            : b.value();
    Matrix v = expand_to(a.value(), ref).cwiseProduct(expand_to(b.value(), ref));
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    const Eigen::Index ar = a.rows(), ac = a.cols(), br = b.rows(),
                       bcl = b.cols();
    return make_op(std::move(v), {a.node(), b.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (pa->requires_grad)
                           gm.accumulate(
                               pa, reduce_to(
                                       g.cwiseProduct(expand_to(pb->value, g)),
                                       ar, ac));
                       if (pb->requires_grad)
                           gm.accumulate(
                               pb, reduce_to(
                                       g.cwiseProduct(expand_to(pa->value, g)),
                                       br, bcl));
                   });
}

Tensor neg(const Tensor& x) {
    Node* px = x.node().get();
    return make_op(-x.value(), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (px->requires_grad) gm.accumulate(px, Matrix(-g));
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions of " +
                         shape_str(a.rows(), a.cols()) + " and " +
                         shape_str(b.rows(), b.cols()) + " do not match");
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    return make_op(a.value() * b.value(), {a.node(), b.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (pa->requires_grad)
                           gm.accumulate(pa, Matrix(g * pb->value.transpose()));
                       if (pb->requires_grad)
                           gm.accumulate(pb, Matrix(pa->value.transpose() * g));
                   });
}

Tensor silu(const Tensor& x) {
    Matrix s = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
    Node* px = x.node().get();
    return make_op(x.value().cwiseProduct(s), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (!px->requires_grad) return;
                       // d silu/dx = s(x) * (1 + x * (1 - s(x)))
                       Matrix d = (s.array() *
                                   (1.0 + px->value.array() * (1.0 - s.array())))
                                      .matrix();
                       gm.accumulate(px, g.cwiseProduct(d));
                   });
}

Tensor exp(const Tensor& x) {
    Matrix y = x.value().array().exp().matrix();
    Node* px = x.node().get();
    return make_op(y, {x.node()}, [=](const Matrix& g, GradMap& gm) {
        if (px->requires_grad) gm.accumulate(px, g.cwiseProduct(y));
    });
}

Tensor log(const Tensor& x) {
    if ((x.value().array() <= 0.0).any())
        throw NumericalError("log: non-positive entry in input");
    Node* px = x.node().get();
    return make_op(x.value().array().log().matrix(), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (px->requires_grad)
                           gm.accumulate(px, g.cwiseQuotient(px->value));
                   });
}

Tensor square(const Tensor& x) {
    Node* px = x.node().get();
    return make_op(x.value().array().square().matrix(), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (px->requires_grad)
                           gm.accumulate(
                               px, Matrix(2.0 * g.cwiseProduct(px->value)));
                   });
}

Tensor reciprocal(const Tensor& x) {
    if ((x.value().array() == 0.0).any())
        throw NumericalError("reciprocal: zero entry in input");
    Matrix y = x.value().cwiseInverse();
    Node* px = x.node().get();
    return make_op(y, {x.node()}, [=](const Matrix& g, GradMap& gm) {
        if (px->requires_grad)
            gm.accumulate(px, Matrix(-g.cwiseProduct(y).cwiseProduct(y)));
    });
}

Tensor clamp_min(const Tensor& x, double floor) {
    Node* px = x.node().get();
    return make_op(
        x.value().cwiseMax(floor), {x.node()},
        [=](const Matrix& g, GradMap& gm) {
            if (!px->requires_grad) return;
            Matrix masked = ((px->value.array() > floor).cast<double>() *
                             g.array())
                                .matrix();
            gm.accumulate(px, masked);
        });
}

Tensor sum(const Tensor& x) {
    Matrix v(1, 1);
    v(0, 0) = x.value().sum();
    Node* px = x.node().get();
    const Eigen::Index r = x.rows(), c = x.cols();
    return make_op(std::move(v), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (px->requires_grad)
                           gm.accumulate(
                               px, Matrix(Matrix::Constant(r, c, g(0, 0))));
                   });
}

Tensor mean(const Tensor& x) {
    Matrix v(1, 1);
    v(0, 0) = x.value().mean();
    Node* px = x.node().get();
    const Eigen::Index r = x.rows(), c = x.cols();
    const double inv_n = 1.0 / static_cast<double>(r * c);
    return make_op(std::move(v), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (px->requires_grad)
                           gm.accumulate(px, Matrix(Matrix::Constant(
                                                 r, c, g(0, 0) * inv_n)));
                   });
}

Tensor sqnorm(const Tensor& x) {
    Matrix v = x.value().rowwise().squaredNorm();
    Node* px = x.node().get();
    return make_op(std::move(v), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (!px->requires_grad) return;
                       Matrix gx = (2.0 * (px->value.array().colwise() *
                                           g.col(0).array()))
                                       .matrix();
                       gm.accumulate(px, gx);
                   });
}

Tensor row_sum(const Tensor& x) {
    Matrix v = x.value().rowwise().sum();
    Node* px = x.node().get();
    const Eigen::Index cols = x.cols();
    return make_op(std::move(v), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (px->requires_grad)
                           gm.accumulate(px,
                                         Matrix(g.col(0).replicate(1, cols)));
                   });
}

Tensor logsumexp_rows(const Tensor& x) {
    const Matrix& m = x.value();
    Eigen::VectorXd rowmax = m.rowwise().maxCoeff();
    Eigen::VectorXd lse =
        rowmax.array() +
        (m.colwise() - rowmax).array().exp().rowwise().sum().log();
    Node* px = x.node().get();
    return make_op(Matrix(lse), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (!px->requires_grad) return;
                       // softmax_ij = exp(x_ij - lse_i)
                       Matrix soft =
                           (px->value.colwise() - lse).array().exp().matrix();
                       gm.accumulate(px, Matrix((soft.array().colwise() *
                                                 g.col(0).array())
                                                    .matrix()));
                   });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    if (s.cols() != 1 || s.rows() != x.rows())
        throw ShapeError("scale_rows: scale must be " + shape_str(x.rows(), 1) +
                         ", got " + shape_str(s.rows(), s.cols()));
    Matrix v =
        (x.value().array().colwise() * s.value().col(0).array()).matrix();
    Node* px = x.node().get();
    Node* ps = s.node().get();
    return make_op(
        std::move(v), {x.node(), s.node()},
        [=](const Matrix& g, GradMap& gm) {
            if (px->requires_grad)
                gm.accumulate(px, Matrix((g.array().colwise() *
                                          ps->value.col(0).array())
                                             .matrix()));
            if (ps->requires_grad)
                gm.accumulate(
                    ps, Matrix(g.cwiseProduct(px->value).rowwise().sum()));
        });
}

Tensor slice_rows(const Tensor& x, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > x.rows())
        throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         shape_str(x.rows(), x.cols()));
    Node* px = x.node().get();
    const Eigen::Index r = x.rows(), c = x.cols();
    return make_op(x.value().middleRows(start, count), {x.node()},
                   [=](const Matrix& g, GradMap& gm) {
                       if (!px->requires_grad) return;
                       Matrix gx = Matrix::Zero(r, c);
                       gx.middleRows(start, count) = g;
                       gm.accumulate(px, gx);
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no operands");
    Eigen::Index rows = parts[0].rows(), cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows)
            throw ShapeError("concat_cols: row mismatch between " +
                             shape_str(rows, parts[0].cols()) + " and " +
                             shape_str(p.rows(), p.cols()));
        cols += p.cols();
    }
    Matrix v(rows, cols);
    std::vector<NodePtr> parents;
    std::vector<Node*> raw;
    std::vector<Eigen::Index> offs, widths;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        parents.push_back(p.node());
        raw.push_back(p.node().get());
        offs.push_back(at);
        widths.push_back(p.cols());
        at += p.cols();
    }
    return make_op(std::move(v), std::move(parents),
                   [=](const Matrix& g, GradMap& gm) {
                       for (size_t i = 0; i < raw.size(); ++i)
                           if (raw[i]->requires_grad)
                               gm.accumulate(raw[i], Matrix(g.middleCols(
                                                         offs[i], widths[i])));
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no operands");
    Eigen::Index cols = parts[0].cols(), rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols)
            throw ShapeError("concat_rows: column mismatch between " +
                             shape_str(parts[0].rows(), cols) + " and " +
                             shape_str(p.rows(), p.cols()));
        rows += p.rows();
    }
    Matrix v(rows, cols);
    std::vector<NodePtr> parents;
    std::vector<Node*> raw;
    std::vector<Eigen::Index> offs, heights;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.value();
        parents.push_back(p.node());
        raw.push_back(p.node().get());
        offs.push_back(at);
        heights.push_back(p.rows());
        at += p.rows();
    }
    return make_op(std::move(v), std::move(parents),
                   [=](const Matrix& g, GradMap& gm) {
                       for (size_t i = 0; i < raw.size(); ++i)
                           if (raw[i]->requires_grad)
                               gm.accumulate(raw[i], Matrix(g.middleRows(
                                                         offs[i], heights[i])));
                   });
}

}  // namespace ebmgeo::ad
