#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xmodal {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Little-endian byte sink.
class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v);
    void f32s(std::span<const float> values);
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    void write_file(const std::filesystem::path& path) const;

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

// Little-endian byte source. Every read past the end throws FormatError naming
// the source and the offset.
class ByteReader {
public:
    ByteReader(std::vector<std::uint8_t> bytes, std::string source);
    static ByteReader from_file(const std::filesystem::path& path);

    std::uint8_t u8();
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32();
    std::vector<float> f32s(std::size_t count);
    std::string raw(std::size_t count);

    std::size_t offset() const { return offset_; }
    std::span<const std::uint8_t> bytes() const { return bytes_; }
    const std::string& source() const { return source_; }
    bool at_end() const { return offset_ == bytes_.size(); }
    [[noreturn]] void fail(const std::string& what) const;

private:
    void need(std::size_t n) const;
    std::uint64_t get(int n);
    std::vector<std::uint8_t> bytes_;
    std::string source_;
    std::size_t offset_ = 0;
};

}  // namespace xmodal
