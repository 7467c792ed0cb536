#include "xmodal/checkpoint.hpp"

#include <zlib.h>

#include <cmath>
#include <limits>
#include <map>

#include "xmodal/binary_io.hpp"
#include "xmodal/error.hpp"

namespace xmodal {

namespace {

constexpr char magic[] = "UBVL";
constexpr const char* crc_name = "@crc32";

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

Tensor vector_tensor(const std::vector<float>& values) { return Tensor({values.size()}, values); }

std::vector<float> u64_chunks(std::uint64_t v) {
    std::vector<float> out(4);
    for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = static_cast<float>((v >> (16 * (3 - i))) & 0xFFFF);
    return out;
}

std::uint64_t exact_uint(float v, std::uint64_t limit, const std::string& what) {
    if (!(v >= 0.0f) || v > static_cast<float>(limit) || std::floor(v) != v) {
        throw FormatError(what + ": value " + std::to_string(v) + " is not an integer in [0, " +
                          std::to_string(limit) + "]");
    }
    return static_cast<std::uint64_t>(v);
}

std::uint64_t from_chunks(std::span<const float> v, const std::string& what) {
    std::uint64_t out = 0;
    for (float c : v) out = (out << 16) | exact_uint(c, 0xFFFF, what);
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors) {
    ByteWriter w;
    w.raw(std::string_view(magic, 4));
    w.u32(checkpoint_version);
    w.u32(static_cast<std::uint32_t>(tensors.size() + 1));
    std::vector<float> crcs;
    auto put = [&w](const std::string& name, const Tensor& t) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ValueError("tensor name too long: " + name);
        if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw ValueError("tensor rank too large: " + name);
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.raw(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        w.f32s(t.data());
    };
    for (const auto& nt : tensors) {
        if (nt.name == crc_name) throw ValueError("tensor name '@crc32' is reserved");
        const std::size_t start = w.bytes().size();
        put(nt.name, nt.tensor);
        const auto crc = crc_of(std::span(w.bytes()).subspan(start));
        crcs.push_back(static_cast<float>(crc >> 16));
        crcs.push_back(static_cast<float>(crc & 0xFFFF));
    }
    if (tensors.empty()) {
        put(crc_name, Tensor({1}, {0.0f}));
    } else {
        put(crc_name, Tensor({tensors.size(), 2}, std::move(crcs)));
    }
    return w.bytes();
}

std::vector<NamedTensor> decode_tensors(std::vector<std::uint8_t> bytes, const std::string& source) {
    ByteReader r(std::move(bytes), source);
    if (r.raw(4) != std::string_view(magic, 4)) {
        throw FormatError(source + ": bad magic (expected UBVL) at offset 0");
    }
    const auto version = r.u32();
    if (version != checkpoint_version) {
        throw FormatError(source + ": unsupported version " + std::to_string(version) + " at offset 4");
    }
    const auto count = r.u32();
    if (count == 0) r.fail("tensor count 0 (the checksum table is missing)");
    std::vector<NamedTensor> out;
    std::vector<std::size_t> starts;
    std::map<std::string, std::size_t> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t start = r.offset();
        const auto name_len = r.u16();
        const auto name = r.raw(name_len);
        if (name.empty()) r.fail("empty tensor name");
        if (seen.count(name)) r.fail("duplicate tensor '" + name + "'");
        const auto rank = r.u8();
        Shape shape;
        std::size_t n = 1;
        for (std::uint8_t k = 0; k < rank; ++k) {
            const std::size_t d = r.u32();
            if (d == 0) r.fail("tensor '" + name + "' has a zero extent");
            if (n > (r.bytes().size() - r.offset()) / 4 / d) {
                r.fail("tensor '" + name + "' extents exceed the remaining input");
            }
            n *= d;
            shape.push_back(d);
        }
        auto values = r.f32s(n);
        seen[name] = out.size();
        starts.push_back(start);
        out.push_back({name, Tensor(std::move(shape), std::move(values))});
    }
    if (!r.at_end()) r.fail("trailing bytes after " + std::to_string(count) + " tensors");

    const auto& table = out.back();
    if (table.name != crc_name) {
        throw FormatError(source + ": last tensor is '" + table.name + "', expected '@crc32' at offset " +
                          std::to_string(starts.back()));
    }
    const std::size_t body = out.size() - 1;
    const Shape expected = body ? Shape{body, 2} : Shape{1};
    if (table.tensor.shape() != expected) {
        throw FormatError(source + ": checksum table " + shape_to_string(table.tensor.shape()) + " does not cover " +
                          std::to_string(body) + " tensors at offset " + std::to_string(starts.back()));
    }
    const auto all = r.bytes();
    for (std::size_t i = 0; i < body; ++i) {
        const auto crc = crc_of(all.subspan(starts[i], starts[i + 1] - starts[i]));
        const auto hi = table.tensor[2 * i], lo = table.tensor[2 * i + 1];
        if (hi != static_cast<float>(crc >> 16) || lo != static_cast<float>(crc & 0xFFFF)) {
            throw FormatError(source + ": checksum mismatch in tensor '" + out[i].name + "' (bytes " +
                              std::to_string(starts[i]) + ".." + std::to_string(starts[i + 1]) + ") at offset " +
                              std::to_string(starts[i]));
        }
    }
    out.pop_back();
    return out;
}

std::vector<std::uint8_t> encode_checkpoint(const TrainState& state) {
    std::vector<NamedTensor> t;
    const auto text = state.config.to_text();
    std::vector<float> text_values(text.begin(), text.end());
    for (auto& v : text_values) v = static_cast<float>(static_cast<unsigned char>(v));
    t.push_back({"@config", vector_tensor(text_values)});
    const auto& d = state.dims;
    t.push_back({"@dims", vector_tensor({static_cast<float>(d.image_height), static_cast<float>(d.image_width),
                                         static_cast<float>(d.image_channels), static_cast<float>(d.feature_dim),
                                         static_cast<float>(d.n_units), static_cast<float>(d.max_length)})});
    std::vector<float> counters;
    for (auto v : {state.epoch, state.step, state.total_steps, state.optimizer.step_count()}) {
        const auto c = u64_chunks(v);
        counters.insert(counters.end(), c.begin(), c.end());
    }
    t.push_back({"@counters", Tensor({4, 4}, counters)});

    auto& model = const_cast<Model&>(state.model);
    const auto params = model.parameters();
    for (const auto& p : params) t.push_back({p.name, p.tensor});
    if (state.key_model) {
        for (const auto& p : const_cast<Model&>(*state.key_model).parameters()) t.push_back({"@key." + p.name, p.tensor});
    }
    for (const auto& [name, q] : {std::pair{"@queue.image", &state.image_queue},
                                  std::pair{"@queue.language", &state.language_queue}}) {
        if (q->fill() > 0) t.push_back({name, Tensor({q->fill(), q->dim()}, q->ordered_values())});
    }
    const auto& m = state.optimizer.first_moments();
    const auto& v = state.optimizer.second_moments();
    if (!m.empty()) {
        if (m.size() != params.size() || v.size() != params.size()) {
            throw ValueError("checkpoint: optimizer state does not match the parameter list");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            t.push_back({"@adam.m." + params[i].name, Tensor(params[i].tensor.shape(), m[i])});
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            t.push_back({"@adam.v." + params[i].name, Tensor(params[i].tensor.shape(), v[i])});
        }
    }
    return encode_tensors(t);
}

TrainState decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& source) {
    auto tensors = decode_tensors(std::move(bytes), source);
    std::map<std::string, Tensor> by_name;
    for (auto& nt : tensors) by_name.emplace(nt.name, nt.tensor);
    auto take = [&](const std::string& name) -> Tensor {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError(source + ": missing tensor '" + name + "'");
        Tensor t = it->second;
        by_name.erase(it);
        return t;
    };
    auto take_into = [&](const std::string& name, Tensor& dst) {
        const Tensor src = take(name);
        if (src.shape() != dst.shape()) {
            throw FormatError(source + ": tensor '" + name + "' is " + shape_to_string(src.shape()) + ", expected " +
                              shape_to_string(dst.shape()));
        }
        std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
    };

    const Tensor text_t = take("@config");
    std::string text;
    for (float c : text_t.data()) text.push_back(static_cast<char>(exact_uint(c, 255, source + ": @config")));
    RunConfig config;
    ModelDims dims;
    try {
        apply_config_text(config, text, source + ":@config");
        config.validate();
    } catch (const ValueError& e) {
        throw FormatError(e.what());
    }
    const Tensor dims_t = take("@dims");
    if (dims_t.size() != 6) throw FormatError(source + ": @dims must hold 6 values");
    const auto lim = std::numeric_limits<std::uint32_t>::max();
    dims.image_height = exact_uint(dims_t[0], lim, source + ": @dims");
    dims.image_width = exact_uint(dims_t[1], lim, source + ": @dims");
    dims.image_channels = exact_uint(dims_t[2], lim, source + ": @dims");
    dims.feature_dim = exact_uint(dims_t[3], lim, source + ": @dims");
    dims.n_units = exact_uint(dims_t[4], lim, source + ": @dims");
    dims.max_length = exact_uint(dims_t[5], lim, source + ": @dims");
    const Tensor counters = take("@counters");
    if (counters.shape() != Shape{4, 4}) throw FormatError(source + ": @counters must be [4x4]");

    TrainState state = [&] {
        try {
            return TrainState::init(config, dims);
        } catch (const Error& e) {
            throw FormatError(source + ": stored config does not build a model: " + e.what());
        }
    }();
    auto params = state.model.parameters();
    for (auto& p : params) take_into(p.name, p.tensor);
    if (state.key_model) {
        for (auto& p : state.key_model->parameters()) take_into("@key." + p.name, p.tensor);
    }
    for (const auto& [name, q] : {std::pair{"@queue.image", &state.image_queue},
                                  std::pair{"@queue.language", &state.language_queue}}) {
        if (!by_name.count(name)) continue;
        if (config.mode != LossMode::queue) throw FormatError(source + ": '" + name + "' stored outside queue mode");
        const Tensor rows = take(name);
        if (rows.rank() != 2 || rows.dim(1) != q->dim() || rows.dim(0) > q->capacity()) {
            throw FormatError(source + ": '" + name + "' is " + shape_to_string(rows.shape()) + ", capacity " +
                              std::to_string(q->capacity()) + "x" + std::to_string(q->dim()));
        }
        q->push_rows(rows.data());
    }
    const std::uint64_t adam_steps = from_chunks(counters.data().subspan(12, 4), source + ": @counters");
    if (by_name.count("@adam.m." + params.front().name)) {
        std::vector<std::vector<float>> m, v;
        for (auto& p : params) {
            Tensor mt = Tensor::zeros(p.tensor.shape()), vt = Tensor::zeros(p.tensor.shape());
            take_into("@adam.m." + p.name, mt);
            take_into("@adam.v." + p.name, vt);
            m.push_back(mt.values());
            v.push_back(vt.values());
        }
        state.optimizer.restore(adam_steps, std::move(m), std::move(v));
    } else if (adam_steps != 0) {
        throw FormatError(source + ": optimizer moments missing after " + std::to_string(adam_steps) + " steps");
    }
    if (!by_name.empty()) throw FormatError(source + ": unexpected tensor '" + by_name.begin()->first + "'");
    state.epoch = from_chunks(counters.data().subspan(0, 4), source + ": @counters");
    state.step = from_chunks(counters.data().subspan(4, 4), source + ": @counters");
    state.total_steps = from_chunks(counters.data().subspan(8, 4), source + ": @counters");
    return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(state));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace xmodal
