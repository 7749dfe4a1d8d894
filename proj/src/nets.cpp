#include "ebmgeo/nets.hpp"

#include <cmath>

#include "ebmgeo/common.hpp"

namespace ebmgeo::nets {

Linear Linear::create(Eigen::Index in, Eigen::Index out, rng::Stream& rs) {
    // Fan-in scaled uniform init, U(-1/sqrt(in), 1/sqrt(in)) for weights
    // and biases alike.
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.W = ad::Tensor::leaf(rs.uniform_matrix(in, out, -bound, bound));
    l.b = ad::Tensor::leaf(rs.uniform_matrix(1, out, -bound, bound));
    return l;
}

Linear Linear::zeros(Eigen::Index in, Eigen::Index out) {
    Linear l;
    l.W = ad::Tensor::leaf(ad::Matrix::Zero(in, out));
    l.b = ad::Tensor::leaf(ad::Matrix::Zero(1, out));
    return l;
}

EnergyModel EnergyModel::create(Eigen::Index input_dim, rng::Stream& rs) {
    EnergyModel m;
    m.input_dim = input_dim;
    m.trunk.push_back(Linear::create(input_dim, 32, rs));
    for (int i = 0; i < 4; ++i) m.trunk.push_back(Linear::create(32, 32, rs));
    m.trunk.push_back(Linear::create(32, 32, rs));  // linear feature layer
    m.f1 = Linear::create(32, 1, rs);
    m.f2 = Linear::create(32, 1, rs);
    m.f3 = Linear::create(32, 1, rs);
    return m;
}

ad::Tensor EnergyModel::forward(const ad::Tensor& x) const {
    if (x.cols() != input_dim) {
        throw ShapeError("EnergyModel::forward: expected " +
                         shape_str(x.rows(), input_dim) + " input, got " +
                         shape_str(x.rows(), x.cols()));
    }
    ad::Tensor h = x;
    for (std::size_t i = 0; i + 1 < trunk.size(); ++i) h = ad::silu(trunk[i](h));
    ad::Tensor z = trunk.back()(h);
    return ad::add(ad::mul(f1(z), f2(z)), f3(ad::square(z)));
}

Eigen::VectorXd EnergyModel::energies(const ad::Matrix& x) const {
    return forward(ad::Tensor::constant(x)).value().col(0);
}

std::vector<ad::Tensor> EnergyModel::parameters() {
    std::vector<ad::Tensor> ps;
    for (auto& [name, t] : named_parameters()) ps.push_back(t);
    return ps;
}

std::vector<std::pair<std::string, ad::Tensor>> EnergyModel::named_parameters() {
    std::vector<std::pair<std::string, ad::Tensor>> ps;
    for (std::size_t i = 0; i < trunk.size(); ++i) {
        ps.emplace_back("trunk." + std::to_string(i) + ".W", trunk[i].W);
        ps.emplace_back("trunk." + std::to_string(i) + ".b", trunk[i].b);
    }
    ps.emplace_back("f1.W", f1.W);
    ps.emplace_back("f1.b", f1.b);
    ps.emplace_back("f2.W", f2.W);
    ps.emplace_back("f2.b", f2.b);
    ps.emplace_back("f3.W", f3.W);
    ps.emplace_back("f3.b", f3.b);
    return ps;
}

std::string EnergyModel::descriptor() const {
    return "energy_mlp/v1 d=" + std::to_string(input_dim) +
           " width=32 depth=6 heads=quadratic";
}

InterpolantNet InterpolantNet::create(Eigen::Index dim, rng::Stream& rs) {
    InterpolantNet n;
    n.dim = dim;
    const Eigen::Index in = 2 * dim + 1;
    n.layers.push_back(Linear::create(in, 32, rs));
    n.layers.push_back(Linear::create(32, 64, rs));
    n.layers.push_back(Linear::create(64, 64, rs));
    n.layers.push_back(Linear::create(64, 32, rs));
    // Zero-initialised head: the untrained path is the straight line.
    n.layers.push_back(Linear::zeros(32, dim));
    return n;
}

ad::Tensor InterpolantNet::forward(const ad::Tensor& input) const {
    const Eigen::Index want = 2 * dim + 1;
    if (input.cols() != want) {
        throw ShapeError("InterpolantNet::forward: expected " +
                         shape_str(input.rows(), want) + " input, got " +
                         shape_str(input.rows(), input.cols()));
    }
    ad::Tensor h = input;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) h = ad::silu(layers[i](h));
    return layers.back()(h);
}

std::vector<ad::Tensor> InterpolantNet::parameters() {
    std::vector<ad::Tensor> ps;
    for (auto& [name, t] : named_parameters()) ps.push_back(t);
    return ps;
}

std::vector<std::pair<std::string, ad::Tensor>> InterpolantNet::named_parameters() {
    std::vector<std::pair<std::string, ad::Tensor>> ps;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        ps.emplace_back("layers." + std::to_string(i) + ".W", layers[i].W);
        ps.emplace_back("layers." + std::to_string(i) + ".b", layers[i].b);
    }
    return ps;
}

std::string InterpolantNet::descriptor() const {
    return "interpolant_mlp/v1 d=" + std::to_string(dim) + " widths=32,64,64,32";
}

}  // namespace ebmgeo::nets
