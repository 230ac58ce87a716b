#include "mtr/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace mtr {

namespace {

constexpr std::string_view kMagic{"MTRCKPT\0", 8};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    detail::ByteWriter w;
    w.bytes(kMagic);
    w.u32(kCheckpointVersion);
    const auto& c = ckpt.config;
    w.u64(c.input.channels);
    w.u64(c.input.height);
    w.u64(c.input.width);
    w.u64(c.conv.size());
    for (const auto& l : c.conv) {
        w.u64(l.out_channels);
        w.u64(l.kernel);
        w.u64(l.stride);
        w.u8(static_cast<std::uint8_t>(l.activation));
    }
    w.u64(c.fc6_width);
    w.u64(c.fc7_width);
    w.u8(static_cast<std::uint8_t>(c.fc_activation));
    w.u64(c.num_keypoints);
    w.u64(c.num_actions);
    w.u8(static_cast<std::uint8_t>(c.heads_on));
    w.f64(ckpt.weights.detection);
    w.f64(ckpt.weights.pose);
    w.f64(ckpt.weights.action);
    w.u64(ckpt.seed);
    w.u64(ckpt.state.iterations_done);

    const auto& p = ckpt.state.params;
    w.u64(p.blocks.size());
    for (const auto& b : p.blocks) {
        w.str(b.name);
        w.u64(b.shape.size());
        for (auto d : b.shape) w.u64(d);
        for (std::size_t i = 0; i < b.size; ++i) w.f64(p.values[b.offset + i]);
    }
    const bool has_velocity = ckpt.state.velocity.size() == p.count();
    w.u8(has_velocity ? 1 : 0);
    if (has_velocity) {
        for (double v : ckpt.state.velocity) w.f64(v);
    }
    return w.data();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    detail::ByteReader r(bytes);
    if (r.bytes(kMagic.size()) != kMagic) throw std::runtime_error("checkpoint: bad magic");
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ckpt;
    auto& c = ckpt.config;
    c.input.channels = r.u64();
    c.input.height = r.u64();
    c.input.width = r.u64();
    c.conv.resize(r.u64());
    for (auto& l : c.conv) {
        l.out_channels = r.u64();
        l.kernel = r.u64();
        l.stride = r.u64();
        l.activation = static_cast<Activation>(r.u8());
    }
    c.fc6_width = r.u64();
    c.fc7_width = r.u64();
    c.fc_activation = static_cast<Activation>(r.u8());
    c.num_keypoints = r.u64();
    c.num_actions = r.u64();
    c.heads_on = static_cast<HeadAttachment>(r.u8());
    ckpt.weights.detection = r.f64();
    ckpt.weights.pose = r.f64();
    ckpt.weights.action = r.f64();
    ckpt.seed = r.u64();
    ckpt.state.iterations_done = r.u64();

    MultitaskNet net(c);
    auto params = net.zero_params();
    const auto n_blocks = r.u64();
    if (n_blocks != params.blocks.size()) throw std::runtime_error("checkpoint: block count does not match config");
    for (auto& b : params.blocks) {
        if (r.str() != b.name) throw std::runtime_error("checkpoint: unexpected block order at " + b.name);
        std::vector<std::size_t> shape(r.u64());
        for (auto& d : shape) d = r.u64();
        if (shape != b.shape) throw std::runtime_error("checkpoint: shape mismatch for " + b.name);
        for (std::size_t i = 0; i < b.size; ++i) params.values[b.offset + i] = r.f64();
    }
    if (r.u8() == 1) {
        ckpt.state.velocity.resize(params.count());
        for (auto& v : ckpt.state.velocity) v = r.f64();
    }
    if (!r.at_end()) throw std::runtime_error("checkpoint: trailing bytes");
    ckpt.state.params = std::move(params);
    return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace mtr
