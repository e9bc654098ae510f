//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/container.hpp"

#include "htakd/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace htakd {

namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

class Writer {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    template <typename T>
    void put(T v) {
        raw(&v, sizeof(T));
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

    void raw(void* p, std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw LengthError(std::string("container truncated reading ") + what + " at byte " + std::to_string(pos_) +
                              " (need " + std::to_string(n) + ", have " + std::to_string(bytes_.size() - pos_) + ")");
        }
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T get(const char* what) {
        T v;
        raw(&v, sizeof(T), what);
        return v;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::uint8_t> encode_container(const Container& container) {
    Writer w;
    w.raw(kContainerMagic, 4);
    w.put<std::uint32_t>(kContainerVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(container.metadata.size()));
    w.raw(container.metadata.data(), container.metadata.size());
    for (const auto& [name, tensor] : container.tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("tensor name too long");
        if (tensor.rank() > std::numeric_limits<std::uint8_t>::max()) throw ContractError("tensor rank too large");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.raw(name.data(), name.size());
        w.put<std::uint8_t>(static_cast<std::uint8_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        w.raw(tensor.data().data(), tensor.numel() * sizeof(double));
    }
    return w.take();
}

Container decode_container(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    r.raw(magic, 4, "magic");
    if (std::memcmp(magic, kContainerMagic, 4) != 0) throw FormatError("bad container magic", 0);
    const auto version = r.get<std::uint32_t>("version");
    if (version != kContainerVersion) {
        throw FormatError("unsupported container version " + std::to_string(version), 4);
    }
    Container out;
    const auto meta_len = r.get<std::uint32_t>("metadata length");
    out.metadata.resize(meta_len);
    r.raw(out.metadata.data(), meta_len, "metadata");
    while (!r.at_end()) {
        const std::size_t record_start = r.pos();
        const auto name_len = r.get<std::uint16_t>("name length");
        std::string name(name_len, '\0');
        r.raw(name.data(), name_len, "name");
        const auto rank = r.get<std::uint8_t>("rank");
        Shape shape(rank);
        for (auto& d : shape) d = r.get<std::uint32_t>("dims");
        std::vector<double> data(shape_numel(shape));
        r.raw(data.data(), data.size() * sizeof(double), "tensor data");
        if (!out.tensors.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
            throw FormatError("duplicate tensor '" + name + "'", record_start);
        }
    }
    return out;
}

void save_container(const std::filesystem::path& path, const Container& container) {
    write_file_bytes(path, encode_container(container));
}

Container load_container(const std::filesystem::path& path) { return decode_container(read_file_bytes(path)); }

bool is_container_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    if (!in.read(magic, 4)) return false;
    return std::memcmp(magic, kContainerMagic, 4) == 0;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
        }
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

std::string format_key_values(const std::map<std::string, std::string>& values) {
    std::string out;
    for (const auto& [k, v] : values) out += k + " = " + v + "\n";
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

}  // namespace htakd
