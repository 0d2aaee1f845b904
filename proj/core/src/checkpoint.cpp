#include "idcm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "idcm/util.hpp"

namespace idcm {

namespace {

constexpr char kMagic[8] = {'I', 'D', 'C', 'M', 'C', 'K', 'P', 'T'};

class Writer {
public:
    template <typename U>
    void put(U value) {
        static_assert(std::is_integral_v<U>);
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            out_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
        }
    }
    void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
    void put_bytes(std::string_view s) { out_.append(s); }
    void put_string(std::string_view s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    Reader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return static_cast<U>(v);
    }
    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
    std::string_view get_bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string get_string() { return std::string(get_bytes(get<std::uint32_t>())); }
    bool done() const { return pos_ == data_.size(); }
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(source_ + ": corrupt checkpoint: " + what);
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) {
            fail("unexpected end of data");
        }
    }

    std::string_view data_;
    std::string source_;
    std::size_t pos_ = 0;
};

struct RawTensor {
    std::vector<std::uint64_t> shape;
    std::vector<float> data;
};

void put_tensor(Writer& w, const std::string& name, const std::vector<std::size_t>& shape,
                std::span<const float> data) {
    w.put(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) {
        w.put(static_cast<std::uint64_t>(d));
    }
    for (float v : data) {
        w.put_f32(v);
    }
}

} // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.put_bytes(std::string_view(kMagic, sizeof(kMagic)));
    w.put(kCheckpointVersion);
    w.put_string(ckpt.config_snapshot);

    std::string vocab;
    for (const auto& t : ckpt.vocabulary.terms()) {
        vocab += t;
        vocab += '\n';
    }
    w.put_string(vocab);

    const auto& kernels = ckpt.model.kernels;
    w.put(static_cast<std::uint32_t>(kernels.size()));
    for (std::size_t k = 0; k < kernels.size(); ++k) {
        w.put_f64(kernels.mus[k]);
        w.put_f64(kernels.sigmas[k]);
    }

    auto tensors = ckpt.model.tensors();
    std::vector<float> w_ps(ckpt.w_ps.begin(), ckpt.w_ps.end());
    std::vector<float> w_ps_bias{static_cast<float>(ckpt.w_ps_bias)};
    w.put(static_cast<std::uint32_t>(tensors.size() + 2));
    for (const auto& t : tensors) {
        put_tensor(w, t.name, t.shape, t.data);
    }
    put_tensor(w, "w_ps", {w_ps.size()}, w_ps);
    put_tensor(w, "w_ps_bias", {1}, w_ps_bias);
    return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source) {
    Reader r(bytes, source);
    if (r.get_bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
        r.fail("bad magic");
    }
    auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.config_snapshot = r.get_string();

    std::vector<std::string> terms;
    {
        auto vocab = r.get_string();
        std::size_t start = 0;
        while (start < vocab.size()) {
            auto end = vocab.find('\n', start);
            if (end == std::string::npos) {
                r.fail("vocabulary block not newline terminated");
            }
            terms.emplace_back(vocab.substr(start, end - start));
            start = end + 1;
        }
    }
    ckpt.vocabulary = Vocabulary(std::move(terms));

    auto nk = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < nk; ++k) {
        ckpt.model.kernels.mus.push_back(r.get_f64());
        ckpt.model.kernels.sigmas.push_back(r.get_f64());
    }

    std::map<std::string, RawTensor> raw;
    auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(r.get_bytes(r.get<std::uint16_t>()));
        RawTensor t;
        auto rank = r.get<std::uint8_t>();
        std::uint64_t n = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            t.shape.push_back(r.get<std::uint64_t>());
            n *= t.shape.back();
        }
        if (n > bytes.size()) {
            r.fail("tensor '" + name + "' larger than the file");
        }
        t.data.resize(static_cast<std::size_t>(n));
        for (auto& v : t.data) {
            v = r.get_f32();
        }
        if (!raw.emplace(name, std::move(t)).second) {
            r.fail("duplicate tensor '" + name + "'");
        }
    }
    if (!r.done()) {
        r.fail("trailing bytes");
    }

    auto take = [&](const std::string& name, std::size_t rank) -> RawTensor& {
        auto it = raw.find(name);
        if (it == raw.end()) {
            r.fail("missing tensor '" + name + "'");
        }
        if (it->second.shape.size() != rank) {
            r.fail("tensor '" + name + "' has rank " + std::to_string(it->second.shape.size()));
        }
        return it->second;
    };

    auto& m = ckpt.model;
    auto& emb = take("embeddings", 2);
    m.dims.vocab_size = static_cast<std::size_t>(emb.shape[0]);
    m.dims.d_emb = static_cast<std::size_t>(emb.shape[1]);
    m.embeddings = std::move(emb.data);
    if (raw.count("projection") != 0) {
        auto& proj = take("projection", 2);
        if (proj.shape[0] != m.dims.d_emb) {
            r.fail("projection shape does not match embeddings");
        }
        m.dims.d_proj = static_cast<std::size_t>(proj.shape[1]);
        m.projection = std::move(proj.data);
    }
    auto& conv = take("conv_weight", 3);
    if (conv.shape[0] != kConvContext || conv.shape[2] != m.dims.d_in()) {
        r.fail("conv_weight shape does not match embeddings");
    }
    m.dims.d_out = static_cast<std::size_t>(conv.shape[1]);
    m.conv_weight = std::move(conv.data);
    auto& bias = take("conv_bias", 1);
    if (bias.shape[0] != m.dims.d_out) {
        r.fail("conv_bias shape mismatch");
    }
    m.conv_bias = std::move(bias.data);
    auto& kw = take("kernel_weights", 1);
    if (kw.shape[0] != m.kernels.size()) {
        r.fail("kernel_weights do not match the kernel bank");
    }
    m.kernel_weights = std::move(kw.data);
    m.kernel_bias = std::move(take("kernel_bias", 1).data);
    if (m.kernel_bias.size() != 1) {
        r.fail("kernel_bias must hold one value");
    }
    for (float v : take("w_ps", 1).data) {
        ckpt.w_ps.push_back(v);
    }
    auto& wb = take("w_ps_bias", 1);
    if (wb.data.size() != 1) {
        r.fail("w_ps_bias must hold one value");
    }
    ckpt.w_ps_bias = wb.data[0];
    if (ckpt.vocabulary.size() != m.dims.vocab_size) {
        r.fail("vocabulary size " + std::to_string(ckpt.vocabulary.size()) + " does not match embeddings rows " +
               std::to_string(m.dims.vocab_size));
    }
    m.kernels.validate();
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    atomic_write(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file(path), path.string());
}

} // namespace idcm
