#include "emoflow/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "emoflow/error.hpp"

namespace emoflow {

namespace {

constexpr const char* kMagic = "EMOFLOW-CONTAINER";
constexpr const char* kVersion = "v1";

bool single_token(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c == ' ' || c == '\n' || c == '\r' || c == '\t') return false;
    return true;
}

void put_le64(std::string& out, uint64_t u) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

uint64_t get_le64(const unsigned char* p) {
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(p[i]) << (8 * i);
    return u;
}

}  // namespace

void Container::add(const std::string& name, const Shape& shape, const std::vector<double>& data) {
    if (!single_token(name)) throw contract_error("container: tensor name must be a nonempty single token");
    if (has(name)) throw contract_error("container: duplicate tensor name '" + name + "'");
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw shape_error("container: shape does not match data length for '" + name + "'");
    ContainerEntry e;
    e.name = name;
    e.shape = shape;
    e.offset = static_cast<int64_t>(payload.size());
    entries.push_back(std::move(e));
    payload.insert(payload.end(), data.begin(), data.end());
}

void Container::add(const std::string& name, const Tensor& t) { add(name, t.shape(), t.values()); }

bool Container::has(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return true;
    return false;
}

const ContainerEntry& Container::entry(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw data_error("container: no tensor named '" + name + "'");
}

std::vector<double> Container::data(const std::string& name) const {
    const ContainerEntry& e = entry(name);
    return std::vector<double>(payload.begin() + e.offset, payload.begin() + e.offset + e.numel());
}

Tensor Container::tensor(const std::string& name) const { return Tensor(entry(name).shape, data(name)); }

void Container::save(const std::string& path) const {
    if (!single_token(kind)) throw contract_error("container: kind must be a nonempty single token");
    std::ostringstream head;
    head << kMagic << ' ' << kVersion << '\n';
    head << "kind " << kind << '\n';
    for (const auto& [k, v] : meta) {
        if (!single_token(k)) throw contract_error("container: meta key must be a single token");
        if (v.find('\n') != std::string::npos || v.find('\r') != std::string::npos)
            throw contract_error("container: meta value must be a single line");
        head << "meta " << k << ' ' << v << '\n';
    }
    for (const auto& e : entries) {
        head << "tensor " << e.name << ' ' << e.offset << ' ' << e.shape.size();
        for (int d : e.shape) head << ' ' << d;
        head << '\n';
    }
    head << "payload " << payload.size() << '\n';

    std::string body;
    body.reserve(payload.size() * 8);
    for (double d : payload) put_le64(body, std::bit_cast<uint64_t>(d));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("container: cannot open '" + path + "' for writing");
    const std::string h = head.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw data_error("container: write failed for '" + path + "'");
}

Container Container::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("container: cannot open '" + path + "'");
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Container c;
    size_t pos = 0;
    auto next_line = [&](std::string& line) {
        size_t nl = raw.find('\n', pos);
        if (nl == std::string::npos) throw manifest_error("container: header ended without payload line");
        line = raw.substr(pos, nl - pos);
        pos = nl + 1;
    };

    std::string line;
    next_line(line);
    {
        std::istringstream ls(line);
        std::string magic, ver;
        ls >> magic >> ver;
        if (magic != kMagic) throw manifest_error("container: bad magic in '" + path + "'");
        if (ver != kVersion) throw version_error("container: unsupported version '" + ver + "'");
    }

    int64_t declared = -1;
    while (declared < 0) {
        next_line(line);
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "kind") {
            if (!(ls >> c.kind)) throw manifest_error("container: malformed kind line");
        } else if (tag == "meta") {
            std::string k;
            if (!(ls >> k)) throw manifest_error("container: malformed meta line");
            std::string v;
            std::getline(ls, v);
            if (!v.empty() && v.front() == ' ') v.erase(v.begin());
            c.meta[k] = v;
        } else if (tag == "tensor") {
            ContainerEntry e;
            size_t ndim = 0;
            if (!(ls >> e.name >> e.offset >> ndim)) throw manifest_error("container: malformed tensor line");
            for (size_t i = 0; i < ndim; ++i) {
                int d = 0;
                if (!(ls >> d) || d <= 0) throw manifest_error("container: bad dimension in tensor line");
                e.shape.push_back(d);
            }
            if (e.offset < 0) throw manifest_error("container: negative tensor offset");
            c.entries.push_back(std::move(e));
        } else if (tag == "payload") {
            if (!(ls >> declared) || declared < 0) throw manifest_error("container: malformed payload line");
        } else {
            throw manifest_error("container: unknown header line '" + line + "'");
        }
    }
    if (c.kind.empty()) throw manifest_error("container: missing kind line");

    const size_t avail = raw.size() - pos;
    if (avail < static_cast<size_t>(declared) * 8)
        throw truncated_error("container: payload shorter than declared (" + std::to_string(avail) +
                              " bytes for " + std::to_string(declared) + " values)");
    if (avail > static_cast<size_t>(declared) * 8)
        throw manifest_error("container: trailing bytes after declared payload");

    c.payload.resize(static_cast<size_t>(declared));
    const unsigned char* p = reinterpret_cast<const unsigned char*>(raw.data()) + pos;
    for (int64_t i = 0; i < declared; ++i) c.payload[static_cast<size_t>(i)] = std::bit_cast<double>(get_le64(p + i * 8));

    for (size_t i = 0; i < c.entries.size(); ++i) {
        const ContainerEntry& e = c.entries[i];
        if (e.offset + e.numel() > declared)
            throw manifest_error("container: tensor '" + e.name + "' extends past payload");
        for (size_t j = i + 1; j < c.entries.size(); ++j) {
            const ContainerEntry& o = c.entries[j];
            if (e.name == o.name) throw manifest_error("container: duplicate tensor name '" + e.name + "'");
            if (e.offset < o.offset + o.numel() && o.offset < e.offset + e.numel())
                throw manifest_error("container: overlapping tensors '" + e.name + "' and '" + o.name + "'");
        }
    }
    return c;
}

}  // namespace emoflow
