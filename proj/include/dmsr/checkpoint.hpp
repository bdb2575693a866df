// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/deformation.hpp"
#include "dmsr/gaussian.hpp"
#include "dmsr/optimizer.hpp"
#include "dmsr/saliency.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <type_traits>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dmsr {

// Binary layout (little-endian):
//   "DMSR" | u32 version | u64 count
//   f32 positions[3N] | f32 rotations[4N] (w,x,y,z) | f32 log_scales[3N]
//   f32 opacity_logits[N] | f32 sh[N * (degree+1)^2 * 3] (coefficient-major)
//   then zero or more sections: char tag[4] | u64 byte length | payload
// A JSON sidecar (<path>.json) records the SH degree, attribute order and
// section tags.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class ByteWriter {
public:
    template <typename T>
    void put(const T& value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_f32(double value) { put(static_cast<float>(value)); }
    void put_string(const std::string& s);
    void put_bytes(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data, std::string context = "checkpoint")
        : data_(data), context_(std::move(context)) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        require(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    float get_f32() { return get<float>(); }
    std::string get_string();
    std::span<const std::uint8_t> get_bytes(std::size_t n);
    bool done() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void require(std::size_t n) const;

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string context_;
};

struct CheckpointSection {
    std::array<char, 4> tag{};
    std::vector<std::uint8_t> payload;

    std::string tag_string() const { return std::string(tag.data(), tag.size()); }
};

struct CheckpointFile {
    GaussianCloud<float> cloud;
    std::vector<CheckpointSection> sections;

    const CheckpointSection* find(const std::string& tag) const;
};

std::vector<std::uint8_t> encode_checkpoint(const GaussianCloud<float>& cloud,
                                            std::span<const CheckpointSection> sections);
CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes, int sh_degree);

// Writes <path> and <path>.json. Throws Io on failure.
void write_checkpoint(const std::filesystem::path& path, const GaussianCloud<float>& cloud,
                      std::span<const CheckpointSection> sections = {});
// Reads <path> using the degree recorded in <path>.json.
CheckpointFile read_checkpoint(const std::filesystem::path& path);

CheckpointSection make_section(const char (&tag)[5], std::vector<std::uint8_t> payload);

// Section codecs.
std::vector<std::uint8_t> encode_deformation(const DeformationField<float>& field);
DeformationField<float> decode_deformation(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_saliency(const SaliencyState<float>& state);
SaliencyState<float> decode_saliency(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_optimizer(const OptimizerState<float>& state);
OptimizerState<float> decode_optimizer(std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dmsr
