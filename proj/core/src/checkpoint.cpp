#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "mdb/error.hpp"
#include "mdb/trainer.hpp"

namespace mdb {
namespace {

constexpr char kMagic[8] = {'M', 'D', 'B', 'C', 'K', 'P', 'T', '\0'};


class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}
    template <typename U>
    void put(U v) {
        const auto u = static_cast<std::make_unsigned_t<U>>(v);
        char b[sizeof(U)];
        for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
        out_.write(b, sizeof b);
    }
    void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
    void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }

private:
    std::ofstream& out_;
};

class Reader {
public:
    Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
    template <typename U>
    U get() {
        unsigned char b[sizeof(U)];
        bytes(reinterpret_cast<char*>(b), sizeof b);
        std::make_unsigned_t<U> u = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<std::make_unsigned_t<U>>(b[i]) << (8 * i);
        return static_cast<U>(u);
    }
    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
    void bytes(char* p, std::size_t n) {
        in_.read(p, static_cast<std::streamsize>(n));
        if (!in_) throw LoadError("checkpoint " + path_ + " is truncated");
    }

private:
    std::ifstream& in_;
    std::string path_;
};

void write_tensor(Writer& w, const Tensor& t) {
    w.put(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.put(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.put(static_cast<std::int32_t>(d));
    for (float f : t.data) w.put_f32(f);
}

}  // namespace

void save_checkpoint(const ParamState& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("cannot open " + path.string() + " for writing");
    Writer w(out);
    w.bytes(kMagic, sizeof kMagic);
    w.put(kCheckpointVersion);
    const ModelConfig& c = params.config;
    for (int v : {c.input_size, c.channels, c.stem_width, c.n_blocks, c.n_classes}) w.put(static_cast<std::int32_t>(v));
    w.put(static_cast<std::int64_t>(params.step));
    w.put(static_cast<std::int32_t>(params.epoch));
    w.put(static_cast<std::uint32_t>(params.params.size() + params.buffers.size()));
    for (const Tensor& t : params.params) write_tensor(w, t);
    for (const Tensor& t : params.buffers) write_tensor(w, t);
    out.flush();
    if (!out) throw ResourceError("failed writing " + path.string());
}

ParamState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    Reader r(in, path.string());
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw LoadError(path.string() + " is not a checkpoint");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw LoadError("checkpoint version " + std::to_string(version) + " is not supported");
    ModelConfig c;
    c.input_size = r.get<std::int32_t>();
    c.channels = r.get<std::int32_t>();
    c.stem_width = r.get<std::int32_t>();
    c.n_blocks = r.get<std::int32_t>();
    c.n_classes = r.get<std::int32_t>();
    try {
        c.validate();
    } catch (const ArgumentError& e) {
        throw LoadError("checkpoint " + path.string() + ": " + e.what());
    }
    // The reference state fixes tensor names, order and shapes.
    ParamState s = init_model(c, 0);
    s.step = r.get<std::int64_t>();
    s.epoch = r.get<std::int32_t>();
    const auto count = r.get<std::uint32_t>();
    if (count != s.params.size() + s.buffers.size())
        throw LoadError("checkpoint " + path.string() + " has " + std::to_string(count) + " tensors, expected " +
                        std::to_string(s.params.size() + s.buffers.size()));
    auto read_into = [&](Tensor& t) {
        const auto name_len = r.get<std::uint32_t>();
        if (name_len > 4096) throw LoadError("checkpoint " + path.string() + " has a corrupt tensor name");
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        const auto rank = r.get<std::uint32_t>();
        std::vector<int> shape;
        for (std::uint32_t i = 0; i < rank && i < 8; ++i) shape.push_back(r.get<std::int32_t>());
        if (name != t.name || shape != t.shape)
            throw LoadError("checkpoint " + path.string() + ": tensor '" + name + "' does not match '" + t.name + "'");
        for (float& f : t.data) f = r.get_f32();
    };
    for (Tensor& t : s.params) read_into(t);
    for (Tensor& t : s.buffers) read_into(t);
    return s;
}

}  // namespace mdb
