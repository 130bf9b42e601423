#include "handmesh/record_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace handmesh {
namespace {

constexpr char kMagic[8] = {'H', 'M', 'R', 'E', 'C', '0', '0', '1'};

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
    }
    return v;
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
    return v;
}

}  // namespace

const Tensor<float>& Record::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw RecordError("record has no tensor '" + name + "'");
    return it->second;
}

void write_record(const std::string& path, const Record& record) {
    json header;
    header["format_version"] = 1;
    header["dtype"] = "float32-le";
    header["meta"] = record.meta;
    json entries = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : record.tensors) {
        entries[name] = {{"offset", offset}, {"shape", t.shape()}};
        offset += static_cast<std::uint64_t>(t.size()) * 4;
    }
    header["tensors"] = entries;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RecordError("cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof kMagic);
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<std::uint32_t> words;
    for (const auto& [name, t] : record.tensors) {
        words.resize(static_cast<std::size_t>(t.size()));
        for (Index i = 0; i < t.size(); ++i) {
            std::uint32_t w;
            const float f = t[i];
            std::memcpy(&w, &f, 4);
            words[static_cast<std::size_t>(i)] = to_little(w);
        }
        out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    }
    if (!out) throw RecordError("write to '" + path + "' failed");
}

Record read_record(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RecordError("cannot open record '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw RecordError("'" + path + "' is not a record file");
    const std::uint64_t header_size = get_u64(in);
    if (!in || header_size > (1u << 26)) throw RecordError("'" + path + "': corrupt header length");
    std::string text(header_size, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_size));
    json header;
    try {
        header = json::parse(text);
    } catch (const json::parse_error& e) {
        throw RecordError("'" + path + "': bad header: " + e.what());
    }
    const auto payload_start = in.tellg();
    Record r;
    r.meta = header.value("meta", json::object());
    for (const auto& [name, entry] : header.at("tensors").items()) {
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        Tensor<float> t(entry.at("shape").get<Shape>());
        std::vector<std::uint32_t> words(static_cast<std::size_t>(t.size()));
        in.seekg(payload_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
        if (!in) throw RecordError("'" + path + "': truncated tensor '" + name + "'");
        for (Index i = 0; i < t.size(); ++i) {
            const std::uint32_t w = to_little(words[static_cast<std::size_t>(i)]);
            std::memcpy(&t[i], &w, 4);
        }
        r.tensors.emplace(name, std::move(t));
    }
    return r;
}

}  // namespace handmesh
