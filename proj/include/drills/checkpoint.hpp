#pragma once

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "drills/core.hpp"
#include "drills/losses.hpp"
#include "drills/training.hpp"
#include "drills/transforms.hpp"

namespace drills {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointCorruptError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointShapeError : CheckpointError {
    using CheckpointError::CheckpointError;
};

inline constexpr int kCheckpointVersion = 1;

/// On-disk model: a plain-text header (version, transform kind, architecture,
/// hyper-parameters, training metadata) followed by the flat parameter vector
/// as little-endian 64-bit floats in canonical order.
struct Checkpoint {
    TransformKind kind = TransformKind::Prnn;
    int d = 0;
    std::vector<int> layers;  // prnn layer sizes (g and h share the architecture)
    int revnet_blocks = 0;
    int revnet_hidden = 0;
    double revnet_step = 0.25;
    int k_star = 1;
    double lambda1 = 1.0, lambda2 = 1.0, alpha = 50.0, sigma = 0.01;
    bool revnet_include_l3 = false;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    long steps = 0;
    Vec params;
};

namespace detail {

inline void write_le_doubles(std::ostream& os, const Vec& v) {
    static_assert(sizeof(double) == 8);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &v[i], 8);
        if constexpr (std::endian::native == std::endian::big) {
            std::uint64_t s = 0;
            for (int b = 0; b < 8; ++b) s |= ((bits >> (8 * (7 - b))) & 0xffULL) << (8 * b);
            bits = s;
        }
        char buf[8];
        std::memcpy(buf, &bits, 8);
        os.write(buf, 8);
    }
}

inline Vec read_le_doubles(std::istream& is, Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        char buf[8];
        is.read(buf, 8);
        if (is.gcount() != 8) throw CheckpointCorruptError("checkpoint truncated in parameter block");
        std::uint64_t bits;
        std::memcpy(&bits, buf, 8);
        if constexpr (std::endian::native == std::endian::big) {
            std::uint64_t s = 0;
            for (int b = 0; b < 8; ++b) s |= ((bits >> (8 * (7 - b))) & 0xffULL) << (8 * b);
            bits = s;
        }
        std::memcpy(&v[i], &bits, 8);
    }
    return v;
}

inline double parse_double_field(const std::string& s, const char* what) {
    double v;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw CheckpointCorruptError(std::string("bad numeric field: ") + what);
    return v;
}

inline std::uint64_t parse_u64_field(const std::string& s, const char* what) {
    std::uint64_t v;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw CheckpointCorruptError(std::string("bad integer field: ") + what);
    return v;
}

}  // namespace detail

inline Checkpoint make_checkpoint(const TrainedModel& m) {
    Checkpoint c;
    c.kind = kind_of(m.transform);
    c.d = dim_of(m.transform);
    if (const Prnn* p = std::get_if<Prnn>(&m.transform)) {
        c.layers = p->g.layer_sizes;
    } else {
        const RevNet& r = std::get<RevNet>(m.transform);
        c.revnet_blocks = static_cast<int>(r.blocks.size());
        c.revnet_hidden = static_cast<int>(r.blocks.front().k1.rows());
        c.revnet_step = r.step;
    }
    c.k_star = m.hp.k_star;
    c.lambda1 = m.hp.lambda1;
    c.lambda2 = m.hp.lambda2;
    c.alpha = m.hp.alpha;
    c.sigma = m.hp.sigma;
    c.revnet_include_l3 = m.hp.revnet_include_l3;
    c.seed = m.meta.seed;
    c.final_loss = m.meta.final_loss;
    c.steps = m.meta.steps;
    c.params = transform_flatten(m.transform);
    return c;
}

/// Rebuilds the (untrained-shape) transform and installs the stored params.
inline Transform checkpoint_to_transform(const Checkpoint& c) {
    Rng rng(0);
    Transform t = (c.kind == TransformKind::Prnn)
                      ? Transform(Prnn{Mlp(c.layers), Mlp(c.layers)})
                      : Transform(make_revnet(c.d, rng, c.revnet_blocks, c.revnet_hidden,
                                              c.revnet_step));
    if (transform_param_count(t) != c.params.size())
        throw CheckpointShapeError("checkpoint parameter count does not match architecture");
    transform_unflatten(t, c.params);
    return t;
}

inline HyperParams checkpoint_hyperparams(const Checkpoint& c) {
    HyperParams hp = make_hyperparams(c.d, c.k_star, c.lambda1, c.lambda2, c.alpha, c.sigma);
    hp.revnet_include_l3 = c.revnet_include_l3;
    return hp;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open for writing: " + path);
    os << "drills-checkpoint " << kCheckpointVersion << "\n";
    os << "kind " << (c.kind == TransformKind::Prnn ? "prnn" : "revnet") << "\n";
    os << "d " << c.d << "\n";
    if (c.kind == TransformKind::Prnn) {
        os << "layers";
        for (int l : c.layers) os << ' ' << l;
        os << "\n";
    } else {
        os << "blocks " << c.revnet_blocks << "\n";
        os << "hidden " << c.revnet_hidden << "\n";
        os << "step " << fmt_double(c.revnet_step) << "\n";
    }
    os << "k_star " << c.k_star << "\n";
    os << "lambda1 " << fmt_double(c.lambda1) << "\n";
    os << "lambda2 " << fmt_double(c.lambda2) << "\n";
    os << "alpha " << fmt_double(c.alpha) << "\n";
    os << "sigma " << fmt_double(c.sigma) << "\n";
    os << "revnet_include_l3 " << (c.revnet_include_l3 ? 1 : 0) << "\n";
    os << "seed " << c.seed << "\n";
    os << "final_loss " << fmt_double(c.final_loss) << "\n";
    os << "steps " << c.steps << "\n";
    os << "params " << c.params.size() << "\n";
    detail::write_le_doubles(os, c.params);
    if (!os) throw CheckpointError("write failed: " + path);
}

inline void save_checkpoint(const TrainedModel& m, const std::string& path) {
    save_checkpoint(make_checkpoint(m), path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open for reading: " + path);

    auto next_line = [&](const char* what) {
        std::string line;
        if (!std::getline(is, line)) throw CheckpointCorruptError(std::string("missing field: ") + what);
        return line;
    };
    auto field = [&](const std::string& line, const char* key) {
        std::string prefix = std::string(key) + " ";
        if (line.rfind(prefix, 0) != 0)
            throw CheckpointCorruptError(std::string("expected field '") + key + "', got: " + line);
        return line.substr(prefix.size());
    };

    std::string magic = next_line("magic");
    if (magic.rfind("drills-checkpoint ", 0) != 0)
        throw CheckpointCorruptError("not a drills checkpoint file");
    int version = static_cast<int>(detail::parse_double_field(magic.substr(18), "version"));
    if (version != kCheckpointVersion)
        throw CheckpointVersionError("checkpoint version " + std::to_string(version) +
                                     " is not the supported version " +
                                     std::to_string(kCheckpointVersion));

    Checkpoint c;
    std::string kind = field(next_line("kind"), "kind");
    if (kind == "prnn")
        c.kind = TransformKind::Prnn;
    else if (kind == "revnet")
        c.kind = TransformKind::RevNet;
    else
        throw CheckpointCorruptError("unknown transform kind: " + kind);
    c.d = static_cast<int>(detail::parse_double_field(field(next_line("d"), "d"), "d"));
    if (c.kind == TransformKind::Prnn) {
        std::istringstream ls(field(next_line("layers"), "layers"));
        int v;
        while (ls >> v) c.layers.push_back(v);
        if (c.layers.size() < 2 || c.layers.front() != c.d || c.layers.back() != c.d)
            throw CheckpointShapeError("layer sizes do not match the stored dimension");
    } else {
        c.revnet_blocks = static_cast<int>(
            detail::parse_double_field(field(next_line("blocks"), "blocks"), "blocks"));
        c.revnet_hidden = static_cast<int>(
            detail::parse_double_field(field(next_line("hidden"), "hidden"), "hidden"));
        c.revnet_step = detail::parse_double_field(field(next_line("step"), "step"), "step");
    }
    c.k_star =
        static_cast<int>(detail::parse_double_field(field(next_line("k_star"), "k_star"), "k_star"));
    c.lambda1 = detail::parse_double_field(field(next_line("lambda1"), "lambda1"), "lambda1");
    c.lambda2 = detail::parse_double_field(field(next_line("lambda2"), "lambda2"), "lambda2");
    c.alpha = detail::parse_double_field(field(next_line("alpha"), "alpha"), "alpha");
    c.sigma = detail::parse_double_field(field(next_line("sigma"), "sigma"), "sigma");
    c.revnet_include_l3 =
        detail::parse_double_field(field(next_line("revnet_include_l3"), "revnet_include_l3"),
                                   "revnet_include_l3") != 0.0;
    c.seed = detail::parse_u64_field(field(next_line("seed"), "seed"), "seed");
    c.final_loss =
        detail::parse_double_field(field(next_line("final_loss"), "final_loss"), "final_loss");
    c.steps =
        static_cast<long>(detail::parse_double_field(field(next_line("steps"), "steps"), "steps"));
    long nparams = static_cast<long>(
        detail::parse_double_field(field(next_line("params"), "params"), "params"));
    if (nparams < 0) throw CheckpointCorruptError("negative parameter count");
    c.params = detail::read_le_doubles(is, nparams);
    char extra;
    if (is.read(&extra, 1); is.gcount() != 0)
        throw CheckpointCorruptError("trailing bytes after parameter block");
    return c;
}

}  // namespace drills
