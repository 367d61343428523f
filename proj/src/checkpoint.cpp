#include "hit/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace hit {

namespace {

constexpr char kMagic[8] = {'H', 'I', 'T', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(buf, v);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw data_error("checkpoint truncated: " + path);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, static_cast<uint32_t>(params.size()));
    uint64_t total = 0;
    for (const auto& [name, e] : params) total += static_cast<uint64_t>(e.tensor->numel());
    put_u64(buf, total);
    uint64_t offset = 0;
    for (const auto& [name, e] : params) {  // std::map: already name-sorted
        put_u32(buf, static_cast<uint32_t>(name.size()));
        buf += name;
        put_u32(buf, static_cast<uint32_t>(e.tensor->shape.size()));
        for (int64_t d : e.tensor->shape) put_u64(buf, static_cast<uint64_t>(d));
        put_u64(buf, offset);
        offset += static_cast<uint64_t>(e.tensor->numel());
    }
    for (const auto& [name, e] : params)
        for (float v : e.tensor->data) put_f32(buf, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write checkpoint: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::map<std::string, CheckpointEntry> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf, 0, path};
    if (r.bytes(8) != std::string(kMagic, sizeof(kMagic)))
        throw data_error("not a checkpoint file (bad magic): " + path);
    const uint32_t n = r.u32();
    const uint64_t total = r.u64();
    struct Meta {
        std::string name;
        Shape shape;
        uint64_t offset;
        uint64_t count;
    };
    std::vector<Meta> metas;
    for (uint32_t i = 0; i < n; ++i) {
        Meta m;
        m.name = r.bytes(r.u32());
        const uint32_t ndim = r.u32();
        for (uint32_t d2 = 0; d2 < ndim; ++d2) m.shape.push_back(static_cast<int64_t>(r.u64()));
        m.offset = r.u64();
        m.count = static_cast<uint64_t>(shape_numel(m.shape));
        if (m.offset + m.count > total) throw data_error("checkpoint manifest offset out of range: " + path);
        metas.push_back(std::move(m));
    }
    const size_t payload_start = r.pos;
    if (payload_start + total * 4 != buf.size())
        throw data_error("checkpoint payload size mismatch: " + path);
    std::map<std::string, CheckpointEntry> out;
    for (auto& m : metas) {
        Reader pr{buf, payload_start + static_cast<size_t>(m.offset) * 4, path};
        CheckpointEntry e;
        e.shape = m.shape;
        e.values.reserve(static_cast<size_t>(m.count));
        for (uint64_t i = 0; i < m.count; ++i) e.values.push_back(pr.f32());
        if (out.count(m.name)) throw data_error("checkpoint has duplicate parameter: " + m.name);
        out[m.name] = std::move(e);
    }
    return out;
}

void load_checkpoint(const std::string& path, ParamMap& params) {
    auto entries = read_checkpoint(path);
    if (entries.size() != params.size())
        throw data_error("checkpoint has " + std::to_string(entries.size()) + " parameters, model expects " +
                         std::to_string(params.size()));
    for (auto& [name, e] : params) {
        auto it = entries.find(name);
        if (it == entries.end()) throw data_error("checkpoint missing parameter: " + name);
        if (it->second.shape != e.tensor->shape)
            throw data_error("checkpoint shape mismatch for " + name + ": " + shape_str(it->second.shape) + " vs " +
                             shape_str(e.tensor->shape));
        e.tensor->data = it->second.values;
    }
}

}  // namespace hit
