#include "sketch3t/checkpoint.hpp"

#include "sketch3t/config.hpp"
#include "sketch3t/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace sketch3t {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'S', '3', 'T', 'C', 'K', 'P', 'T', '\0'};

class Writer {
public:
    explicit Writer(const std::filesystem::path& p) : out_(p, std::ios::binary) {
        if (!out_) throw CheckpointError("cannot open " + p.string() + " for writing");
    }
    template <class T>
    void pod(const T& v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint64_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void tensor(const std::string& name, const Tensor& t) {
        str(name);
        pod(static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) pod(static_cast<std::int64_t>(d));
        out_.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    void finish() {
        out_.flush();
        if (!out_) throw CheckpointError("checkpoint write failed");
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& p) : in_(p, std::ios::binary) {
        if (!in_) throw CheckpointError("cannot open checkpoint " + p.string());
    }
    template <class T>
    T pod() {
        T v;
        read(&v, sizeof v);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        if (n > (1u << 24)) throw CheckpointError("corrupt checkpoint: oversized string");
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }
    Tensor tensor(const std::string& expected_name, const ad::Shape& expected_shape) {
        const std::string name = str();
        if (name != expected_name) throw CheckpointError("expected tensor " + expected_name + ", found " + name);
        const auto rank = pod<std::uint32_t>();
        if (rank > 8) throw CheckpointError("corrupt checkpoint: tensor rank");
        ad::Shape s;
        for (std::uint32_t i = 0; i < rank; ++i) s.push_back(static_cast<int>(pod<std::int64_t>()));
        if (s != expected_shape)
            throw CheckpointError("tensor " + name + " has shape " + ad::to_string(s) + ", network expects " +
                                  ad::to_string(expected_shape));
        Tensor t(s);
        read(t.data.data(), t.data.size() * sizeof(double));
        return t;
    }

private:
    void read(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw CheckpointError("truncated checkpoint");
    }
    std::ifstream in_;
};

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Sketch3TNet& net, const ParamSet& params,
                     std::uint64_t config_fp) {
    Writer w(path);
    for (char c : kMagic) w.pod(c);
    w.pod(kCheckpointVersion);
    w.pod(model_fingerprint(net.config()));
    w.pod(config_fp);
    w.str(net_config_json(net.config()));
    for (std::size_t g = 0; g < params.groups.size(); ++g) {
        const auto names = net.tensor_names(static_cast<Group>(g));
        const ParamList& list = params.groups[g];
        if (names.size() != list.size()) throw CheckpointError(std::string("parameter group ") + kGroupNames[g] + " is incomplete");
        w.str(kGroupNames[g]);
        w.pod(static_cast<std::uint32_t>(list.size()));
        for (std::size_t k = 0; k < list.size(); ++k) w.tensor(names[k], list[k].value());
    }
    w.tensor("alpha", params.alpha.value());
    w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_model) {
    Reader r(path);
    for (char c : kMagic)
        if (r.pod<char>() != c) throw CheckpointError(path.string() + " is not a checkpoint");
    const auto version = r.pod<std::uint32_t>();
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.model_fingerprint = r.pod<std::uint64_t>();
    ck.config_fingerprint = r.pod<std::uint64_t>();
    if (expected_model && *expected_model != ck.model_fingerprint)
        throw CheckpointError("checkpoint fingerprint " + hex64(ck.model_fingerprint) + " does not match " +
                              hex64(*expected_model));
    ck.net = parse_net_config(r.str());
    if (model_fingerprint(ck.net) != ck.model_fingerprint) throw CheckpointError("checkpoint header is inconsistent");
    const Sketch3TNet net(ck.net);
    const ParamSet shapes = net.init(0);
    for (std::size_t g = 0; g < shapes.groups.size(); ++g) {
        if (r.str() != kGroupNames[g]) throw CheckpointError(std::string("expected parameter group ") + kGroupNames[g]);
        const auto count = r.pod<std::uint32_t>();
        const auto names = net.tensor_names(static_cast<Group>(g));
        if (count != names.size()) throw CheckpointError(std::string("wrong tensor count in group ") + kGroupNames[g]);
        for (std::size_t k = 0; k < names.size(); ++k)
            ck.params.groups[g].push_back(Var::param(r.tensor(names[k], shapes.groups[g][k].shape())));
    }
    ck.params.alpha = Var::param(r.tensor("alpha", {}));
    return ck;
}

} // namespace sketch3t
