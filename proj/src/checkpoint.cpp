#include "foil/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace foil::io {

namespace {

constexpr char kMagic[9] = {'F', 'O', 'I', 'L', 'T', 'N', 'S', 'R', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void TensorFile::put(const std::string& key, Matrix value) {
    entries_[key] = std::move(value);
}

void TensorFile::put(const std::string& key, const Vector& value) {
    entries_[key] = value;
}

void TensorFile::put_scalar(const std::string& key, double value) {
    Matrix m(1, 1);
    m(0, 0) = value;
    entries_[key] = std::move(m);
}

bool TensorFile::contains(const std::string& key) const {
    return entries_.count(key) > 0;
}

const Matrix& TensorFile::matrix(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw DataError("checkpoint: missing tensor '" + key + "'");
    }
    return it->second;
}

Vector TensorFile::vector(const std::string& key) const {
    const Matrix& m = matrix(key);
    if (m.cols() != 1) {
        throw DataError("checkpoint: tensor '" + key + "' is not a column vector");
    }
    return m.col(0);
}

double TensorFile::scalar(const std::string& key) const {
    const Matrix& m = matrix(key);
    if (m.size() != 1) {
        throw DataError("checkpoint: tensor '" + key + "' is not a scalar");
    }
    return m(0, 0);
}

void TensorFile::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("checkpoint: cannot open '" + path + "' for writing");
    }
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, entries_.size());
    for (const auto& [key, m] : entries_) {
        write_u32(out, static_cast<std::uint32_t>(key.size()));
        out.write(key.data(), static_cast<std::streamsize>(key.size()));
        write_u64(out, static_cast<std::uint64_t>(m.rows()));
        write_u64(out, static_cast<std::uint64_t>(m.cols()));
        // Row-major doubles; the host is little-endian, matching the format.
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    if (!out) {
        throw DataError("checkpoint: write to '" + path + "' failed");
    }
}

TensorFile TensorFile::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("checkpoint: cannot open '" + path + "'");
    }
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("checkpoint: '" + path + "' has no FOILTNSR1 magic header");
    }
    TensorFile file;
    const std::uint64_t count = read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t key_len = read_u32(in);
        std::string key(key_len, '\0');
        in.read(key.data(), key_len);
        const auto rows = static_cast<Index>(read_u64(in));
        const auto cols = static_cast<Index>(read_u64(in));
        if (!in || rows < 0 || cols < 0) {
            throw DataError("checkpoint: truncated tensor header in '" + path + "'");
        }
        Matrix m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!in) {
            throw DataError("checkpoint: truncated tensor data in '" + path + "'");
        }
        file.entries_[key] = std::move(m);
    }
    return file;
}

}  // namespace foil::io
