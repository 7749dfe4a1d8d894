#include "ebmgeo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ebmgeo/common.hpp"
#include "ebmgeo/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace ebmgeo::ckpt {

namespace {

constexpr char kMagic[8] = {'E', 'B', 'M', 'G', 'E', 'O', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t off) {
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    return v;
}

}  // namespace

const ad::Matrix* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, m] : arrays)
        if (n == name) return &m;
    return nullptr;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    nlohmann::json header;
    header["descriptor"] = ck.descriptor;
    header["seed"] = ck.seed;
    header["metadata"] = ck.metadata.is_null() ? nlohmann::json::object() : ck.metadata;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [name, m] : ck.arrays) {
        table.push_back({{"name", name},
                         {"rows", static_cast<std::int64_t>(m.rows())},
                         {"cols", static_cast<std::int64_t>(m.cols())}});
    }
    header["arrays"] = table;
    const std::string hjson = header.dump();

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(hjson.size()));
    out += hjson;
    for (const auto& [name, m] : ck.arrays) {
        // Row-major on disk regardless of Eigen's in-memory order.
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("checkpoint '" + path + "' not found");
    std::string buf((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());

    if (buf.size() < 20 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("'" + path + "': corrupt checkpoint (bad magic)");
    const auto version = take<std::uint32_t>(buf, 8);
    if (version != kVersion)
        throw CheckpointError("'" + path + "': unsupported checkpoint version " +
                              std::to_string(version) + " (expected " +
                              std::to_string(kVersion) + ")");
    const auto hlen = take<std::uint64_t>(buf, 12);
    if (20 + hlen > buf.size())
        throw CheckpointError("'" + path + "': truncated checkpoint (header)");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(20, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("'" + path + "': corrupt checkpoint header: " + e.what());
    }

    Checkpoint ck;
    ck.descriptor = header.value("descriptor", "");
    ck.seed = header.value("seed", std::uint64_t{0});
    ck.metadata = header.value("metadata", nlohmann::json::object());

    std::size_t off = 20 + hlen;
    for (const auto& entry : header.at("arrays")) {
        const std::string name = entry.at("name");
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
        if (off + n * sizeof(double) > buf.size())
            throw CheckpointError("'" + path + "': truncated checkpoint (array '" +
                                  name + "')");
        ad::Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) {
                m(i, j) = take<double>(buf, off);
                off += sizeof(double);
            }
        ck.arrays.emplace_back(name, std::move(m));
    }
    if (off != buf.size())
        throw CheckpointError("'" + path + "': trailing bytes after array data");
    return ck;
}

namespace {

// Restores named parameters into a freshly built model, with strict
// descriptor and shape checks.
void restore(const Checkpoint& ck, const std::string& want_descriptor,
             std::vector<std::pair<std::string, ad::Tensor>> params,
             const std::string& path) {
    if (ck.descriptor != want_descriptor)
        throw CheckpointError("'" + path + "': architecture descriptor mismatch: file has '" +
                              ck.descriptor + "', expected '" + want_descriptor + "'");
    for (auto& [name, t] : params) {
        const ad::Matrix* m = ck.find(name);
        if (!m)
            throw CheckpointError("'" + path + "': missing array '" + name + "'");
        if (m->rows() != t.rows() || m->cols() != t.cols())
            throw CheckpointError("'" + path + "': array '" + name + "' has shape " +
                                  shape_str(m->rows(), m->cols()) + ", expected " +
                                  shape_str(t.rows(), t.cols()));
        t.mutable_value() = *m;
    }
}

std::int64_t descriptor_dim(const std::string& descriptor, const std::string& path) {
    const auto pos = descriptor.find(" d=");
    if (pos == std::string::npos)
        throw CheckpointError("'" + path + "': descriptor lacks dimension field: '" +
                              descriptor + "'");
    return std::strtoll(descriptor.c_str() + pos + 3, nullptr, 10);
}

}  // namespace

void save_energy_model(nets::EnergyModel& model, const std::string& path,
                       std::uint64_t seed, const nlohmann::json& metadata) {
    Checkpoint ck;
    ck.descriptor = model.descriptor();
    ck.seed = seed;
    ck.metadata = metadata;
    for (auto& [name, t] : model.named_parameters()) ck.arrays.emplace_back(name, t.value());
    save_checkpoint(ck, path);
}

nets::EnergyModel load_energy_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    rng::Stream rs(0);
    auto model = nets::EnergyModel::create(descriptor_dim(ck.descriptor, path), rs);
    restore(ck, model.descriptor(), model.named_parameters(), path);
    return model;
}

void save_interpolant(nets::InterpolantNet& net, const std::string& path,
                      std::uint64_t seed, const nlohmann::json& metadata) {
    Checkpoint ck;
    ck.descriptor = net.descriptor();
    ck.seed = seed;
    ck.metadata = metadata;
    for (auto& [name, t] : net.named_parameters()) ck.arrays.emplace_back(name, t.value());
    save_checkpoint(ck, path);
}

nets::InterpolantNet load_interpolant(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    rng::Stream rs(0);
    auto net = nets::InterpolantNet::create(descriptor_dim(ck.descriptor, path), rs);
    restore(ck, net.descriptor(), net.named_parameters(), path);
    return net;
}

nlohmann::json checkpoint_metadata(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    return {{"descriptor", ck.descriptor}, {"seed", ck.seed}, {"metadata", ck.metadata}};
}

}  // namespace ebmgeo::ckpt
