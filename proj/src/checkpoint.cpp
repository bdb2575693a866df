// SPDX-License-Identifier: Apache-2.0
#include "dmsr/checkpoint.hpp"

#include "dmsr/error.hpp"

#include "json.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace dmsr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

void ByteWriter::put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteReader::require(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(ErrorKind::Parse, context_ + ": truncated data");
}

std::string ByteReader::get_string() {
    const auto n = get<std::uint32_t>();
    const auto bytes = get_bytes(n);
    return std::string(bytes.begin(), bytes.end());
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n) {
    require(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

const CheckpointSection* CheckpointFile::find(const std::string& tag) const {
    for (const auto& s : sections)
        if (s.tag_string() == tag) return &s;
    return nullptr;
}

CheckpointSection make_section(const char (&tag)[5], std::vector<std::uint8_t> payload) {
    CheckpointSection s;
    std::memcpy(s.tag.data(), tag, 4);
    s.payload = std::move(payload);
    return s;
}

std::vector<std::uint8_t> encode_checkpoint(const GaussianCloud<float>& cloud,
                                            std::span<const CheckpointSection> sections) {
    cloud.check_consistent();
    ByteWriter w;
    w.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("DMSR"), 4));
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint64_t>(cloud.size()));
    for (const auto& p : cloud.positions)
        for (int k = 0; k < 3; ++k) w.put(p[k]);
    for (const auto& q : cloud.rotations)
        for (int k = 0; k < 4; ++k) w.put(q[k]);
    for (const auto& s : cloud.log_scales)
        for (int k = 0; k < 3; ++k) w.put(s[k]);
    for (const float o : cloud.opacity_logits) w.put(o);
    const int coeffs = sh_coeff_count(cloud.sh_degree);
    for (const auto& sh : cloud.sh_coeffs)
        for (int k = 0; k < coeffs; ++k)
            for (int c = 0; c < 3; ++c) w.put(sh(k, c));
    for (const auto& s : sections) {
        w.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.tag.data()), 4));
        w.put(static_cast<std::uint64_t>(s.payload.size()));
        w.put_bytes(s.payload);
    }
    return std::move(w.bytes());
}

CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes, int sh_degree) {
    if (sh_degree < 0 || sh_degree > 1) fail(ErrorKind::Parse, "checkpoint: unsupported SH degree");
    ByteReader r(bytes);
    const auto magic = r.get_bytes(4);
    if (std::memcmp(magic.data(), "DMSR", 4) != 0) fail(ErrorKind::Parse, "checkpoint: bad magic bytes");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) fail(ErrorKind::Parse, "checkpoint: unsupported version " + std::to_string(version));
    const auto count = r.get<std::uint64_t>();
    const int coeffs = sh_coeff_count(sh_degree);
    const std::uint64_t per_gaussian = (3 + 4 + 3 + 1 + static_cast<std::uint64_t>(coeffs) * 3) * sizeof(float);
    if (count > r.remaining() / per_gaussian) fail(ErrorKind::Parse, "checkpoint: count exceeds file size");

    CheckpointFile file;
    auto& cloud = file.cloud;
    cloud.sh_degree = sh_degree;
    cloud.resize(count);
    for (auto& p : cloud.positions)
        for (int k = 0; k < 3; ++k) p[k] = r.get_f32();
    for (auto& q : cloud.rotations)
        for (int k = 0; k < 4; ++k) q[k] = r.get_f32();
    for (auto& s : cloud.log_scales)
        for (int k = 0; k < 3; ++k) s[k] = r.get_f32();
    for (float& o : cloud.opacity_logits) o = r.get_f32();
    for (auto& sh : cloud.sh_coeffs)
        for (int k = 0; k < coeffs; ++k)
            for (int c = 0; c < 3; ++c) sh(k, c) = r.get_f32();
    while (!r.done()) {
        CheckpointSection s;
        const auto tag = r.get_bytes(4);
        std::memcpy(s.tag.data(), tag.data(), 4);
        const auto len = r.get<std::uint64_t>();
        if (len > r.remaining()) fail(ErrorKind::Parse, "checkpoint: section " + s.tag_string() + " is truncated");
        const auto payload = r.get_bytes(static_cast<std::size_t>(len));
        s.payload.assign(payload.begin(), payload.end());
        file.sections.push_back(std::move(s));
    }
    return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

void write_checkpoint(const std::filesystem::path& path, const GaussianCloud<float>& cloud,
                      std::span<const CheckpointSection> sections) {
    write_file_bytes(path, encode_checkpoint(cloud, sections));
    json sidecar;
    sidecar["format"] = "DMSR";
    sidecar["version"] = kCheckpointVersion;
    sidecar["count"] = cloud.size();
    sidecar["sh_degree"] = cloud.sh_degree;
    sidecar["endianness"] = "little";
    sidecar["scalar"] = "f32";
    sidecar["attributes"] = json::array({
        {{"name", "positions"}, {"components", 3}},
        {{"name", "rotations"}, {"components", 4}, {"order", "wxyz"}},
        {{"name", "log_scales"}, {"components", 3}},
        {{"name", "opacity_logits"}, {"components", 1}},
        {{"name", "sh_coeffs"}, {"components", sh_coeff_count(cloud.sh_degree) * 3}, {"order", "coefficient-major"}},
    });
    json tags = json::array();
    for (const auto& s : sections) tags.push_back(s.tag_string());
    sidecar["sections"] = tags;
    std::ofstream out(path.string() + ".json");
    if (!out) fail(ErrorKind::Io, "cannot write sidecar for " + path.string());
    out << sidecar.dump(2) << '\n';
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
    const std::filesystem::path sidecar_path = path.string() + ".json";
    std::ifstream in(sidecar_path);
    if (!in) fail(ErrorKind::Io, "missing checkpoint sidecar: " + sidecar_path.string());
    json sidecar;
    try {
        in >> sidecar;
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, "malformed sidecar " + sidecar_path.string() + ": " + e.what());
    }
    if (sidecar.value("format", "") != "DMSR") fail(ErrorKind::Parse, "sidecar is not a DMSR checkpoint");
    return decode_checkpoint(read_file_bytes(path), sidecar.value("sh_degree", 0));
}

namespace {

json deformation_config_json(const DeformationConfig& c) {
    return {{"levels", c.levels},
            {"base_resolution", c.base_resolution},
            {"base_time_resolution", c.base_time_resolution},
            {"multiplier", c.multiplier},
            {"feature_dim", c.feature_dim},
            {"trunk_width", c.trunk_width},
            {"trunk_depth", c.trunk_depth},
            {"head_width", c.head_width},
            {"head_depth", c.head_depth},
            {"enhance_hidden", c.enhance_hidden},
            {"manifold_enhance", c.manifold_enhance},
            {"grid_init_jitter", c.grid_init_jitter},
            {"bounds_min", {c.bounds_min.x(), c.bounds_min.y(), c.bounds_min.z()}},
            {"bounds_max", {c.bounds_max.x(), c.bounds_max.y(), c.bounds_max.z()}}};
}

DeformationConfig deformation_config_from_json(const json& j) {
    DeformationConfig c;
    c.levels = j.at("levels");
    c.base_resolution = j.at("base_resolution");
    c.base_time_resolution = j.at("base_time_resolution");
    c.multiplier = j.at("multiplier");
    c.feature_dim = j.at("feature_dim");
    c.trunk_width = j.at("trunk_width");
    c.trunk_depth = j.at("trunk_depth");
    c.head_width = j.at("head_width");
    c.head_depth = j.at("head_depth");
    c.enhance_hidden = j.at("enhance_hidden");
    c.manifold_enhance = j.at("manifold_enhance");
    c.grid_init_jitter = j.at("grid_init_jitter");
    for (int k = 0; k < 3; ++k) {
        c.bounds_min[k] = j.at("bounds_min").at(k);
        c.bounds_max[k] = j.at("bounds_max").at(k);
    }
    return c;
}

json saliency_config_json(const SaliencyConfig& c) {
    return {{"enabled", c.enabled},
            {"ema_decay", c.ema_decay},
            {"threshold_quantile", c.threshold_quantile},
            {"warmup_iters", c.warmup_iters},
            {"refresh_interval", c.refresh_interval},
            {"time_bins", c.time_bins},
            {"reactivation", c.reactivation},
            {"reactivation_percentile", c.reactivation_percentile},
            {"render_cached", c.render_cached},
            {"freeze_canonical", c.freeze_canonical}};
}

SaliencyConfig saliency_config_from_json(const json& j) {
    SaliencyConfig c;
    c.enabled = j.at("enabled");
    c.ema_decay = j.at("ema_decay");
    c.threshold_quantile = j.at("threshold_quantile");
    c.warmup_iters = j.at("warmup_iters");
    c.refresh_interval = j.at("refresh_interval");
    c.time_bins = j.at("time_bins");
    c.reactivation = j.at("reactivation");
    c.reactivation_percentile = j.at("reactivation_percentile");
    c.render_cached = j.at("render_cached");
    c.freeze_canonical = j.at("freeze_canonical");
    return c;
}

template <typename Fn>
auto parse_json_field(const std::string& text, const char* what, Fn&& fn) {
    try {
        return fn(json::parse(text));
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("checkpoint ") + what + " config: " + e.what());
    }
}

}  // namespace

std::vector<std::uint8_t> encode_deformation(const DeformationField<float>& field) {
    ByteWriter w;
    w.put_string(deformation_config_json(field.config()).dump());
    const auto blocks = field.params().blocks();
    w.put(static_cast<std::uint32_t>(blocks.size()));
    for (const auto& b : blocks) {
        w.put_string(b.name);
        w.put(static_cast<std::uint64_t>(b.values.size()));
        for (const float v : b.values) w.put(v);
    }
    return std::move(w.bytes());
}

DeformationField<float> decode_deformation(std::span<const std::uint8_t> payload) {
    ByteReader r(payload, "deformation section");
    const DeformationConfig config =
        parse_json_field(r.get_string(), "deformation", [](const json& j) { return deformation_config_from_json(j); });
    DeformationField<float> field;
    field.mutable_config() = config;
    field.set_params(make_deform_params<float>(config));
    auto blocks = field.params().blocks();
    if (r.get<std::uint32_t>() != blocks.size()) fail(ErrorKind::Parse, "deformation section: block count mismatch");
    for (auto& b : blocks) {
        if (r.get_string() != b.name || r.get<std::uint64_t>() != b.values.size()) {
            fail(ErrorKind::Parse, "deformation section: unexpected block layout at " + b.name);
        }
        for (float& v : b.values) v = r.get_f32();
    }
    return field;
}

std::vector<std::uint8_t> encode_saliency(const SaliencyState<float>& s) {
    ByteWriter w;
    w.put_string(saliency_config_json(s.config).dump());
    w.put(static_cast<std::uint64_t>(s.size()));
    for (const float v : s.ema) w.put(v);
    for (const auto f : s.frozen) w.put(f);
    for (const float v : s.grad_accum) w.put(v);
    for (const auto f : s.cached_valid) w.put(f);
    for (const auto& d : s.cached) {
        for (int k = 0; k < 3; ++k) w.put(d.position[k]);
        for (int k = 0; k < 4; ++k) w.put(d.rotation[k]);
        for (int k = 0; k < 3; ++k) w.put(d.log_scale[k]);
    }
    w.put(static_cast<std::uint64_t>(s.frozen_cap));
    w.put(s.last_threshold);
    return std::move(w.bytes());
}

SaliencyState<float> decode_saliency(std::span<const std::uint8_t> payload) {
    ByteReader r(payload, "saliency section");
    const SaliencyConfig config =
        parse_json_field(r.get_string(), "saliency", [](const json& j) { return saliency_config_from_json(j); });
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining()) fail(ErrorKind::Parse, "saliency section: count exceeds payload");
    SaliencyState<float> s(config, static_cast<std::size_t>(n));
    for (float& v : s.ema) v = r.get_f32();
    for (auto& f : s.frozen) f = r.get<std::uint8_t>();
    for (float& v : s.grad_accum) v = r.get_f32();
    for (auto& f : s.cached_valid) f = r.get<std::uint8_t>();
    for (auto& d : s.cached) {
        for (int k = 0; k < 3; ++k) d.position[k] = r.get_f32();
        for (int k = 0; k < 4; ++k) d.rotation[k] = r.get_f32();
        for (int k = 0; k < 3; ++k) d.log_scale[k] = r.get_f32();
    }
    s.frozen_cap = static_cast<std::size_t>(r.get<std::uint64_t>());
    s.last_threshold = r.get_f32();
    return s;
}

std::vector<std::uint8_t> encode_optimizer(const OptimizerState<float>& state) {
    ByteWriter w;
    w.put(state.hyper.beta1);
    w.put(state.hyper.beta2);
    w.put(state.hyper.eps);
    w.put(static_cast<std::uint64_t>(state.step));
    w.put(static_cast<std::uint32_t>(state.slots.size()));
    for (const auto& slot : state.slots) {
        w.put_string(slot.name);
        w.put(static_cast<std::uint64_t>(slot.m.size()));
        for (const float v : slot.m) w.put(v);
        for (const float v : slot.v) w.put(v);
    }
    return std::move(w.bytes());
}

OptimizerState<float> decode_optimizer(std::span<const std::uint8_t> payload) {
    ByteReader r(payload, "optimizer section");
    OptimizerState<float> state;
    state.hyper.beta1 = r.get<double>();
    state.hyper.beta2 = r.get<double>();
    state.hyper.eps = r.get<double>();
    state.step = r.get<std::uint64_t>();
    const auto slots = r.get<std::uint32_t>();
    for (std::uint32_t s = 0; s < slots; ++s) {
        AdamSlot<float> slot;
        slot.name = r.get_string();
        const auto n = r.get<std::uint64_t>();
        if (n > r.remaining()) fail(ErrorKind::Parse, "optimizer section: slot exceeds payload");
        slot.m.resize(static_cast<std::size_t>(n));
        slot.v.resize(static_cast<std::size_t>(n));
        for (float& v : slot.m) v = r.get_f32();
        for (float& v : slot.v) v = r.get_f32();
        state.slots.push_back(std::move(slot));
    }
    return state;
}

}  // namespace dmsr
