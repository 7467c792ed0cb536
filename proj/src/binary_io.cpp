#include "xmodal/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "xmodal/error.hpp"

namespace xmodal {

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f32s(std::span<const float> values) {
    for (float v : values) f32(v);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

void ByteWriter::write_file(const std::filesystem::path& path) const { write_file_bytes(path, bytes_); }

ByteReader::ByteReader(std::vector<std::uint8_t> bytes, std::string source)
    : bytes_(std::move(bytes)), source_(std::move(source)) {}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
    return ByteReader(read_file_bytes(path), path.string());
}

void ByteReader::fail(const std::string& what) const {
    throw FormatError(source_ + ": " + what + " at offset " + std::to_string(offset_));
}

void ByteReader::need(std::size_t n) const {
    if (bytes_.size() - offset_ < n) {
        fail("truncated input (needed " + std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - offset_) +
             " left)");
    }
}

std::uint64_t ByteReader::get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += static_cast<std::size_t>(n);
    return v;
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(get(1)); }

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::vector<float> ByteReader::f32s(std::size_t count) {
    need(count * 4);
    std::vector<float> out(count);
    for (auto& v : out) v = f32();
    return out;
}

std::string ByteReader::raw(std::size_t count) {
    need(count);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), count);
    offset_ += count;
    return s;
}

}  // namespace xmodal
