#include "xrnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "xrnet/error.hpp"
#include "xrnet/text.hpp"

namespace xrnet {

namespace {

constexpr char kMagic[4] = {'C', 'X', 'R', '1'};
constexpr std::uint32_t kVersion = 1;

// Explicit little-endian encoding, independent of host byte order.
void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    Reader(const std::filesystem::path& path, std::string bytes)
        : name_(path.string()), bytes_(std::move(bytes)) {}

    std::uint32_t u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | static_cast<std::uint8_t>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string string() {
        const std::uint32_t len = u32();
        require(len);
        std::string s = bytes_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    void raw(char* dst, std::size_t n) {
        require(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    bool exhausted() const { return pos_ == bytes_.size(); }

    void require(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw ArtifactError(str_printf("checkpoint '%s' is truncated", name_.c_str()));
        }
    }

    const std::string& name() const { return name_; }

private:
    std::string name_;
    std::string bytes_;
    std::size_t pos_ = 0;
};

std::string encode_config(const ModelConfig& config) {
    std::string out;
    put_u32(out, static_cast<std::uint32_t>(config.input_size));
    put_u32(out, static_cast<std::uint32_t>(config.channels));
    put_u32(out, static_cast<std::uint32_t>(config.conv_filters.size()));
    for (const std::size_t f : config.conv_filters) {
        put_u32(out, static_cast<std::uint32_t>(f));
    }
    put_u32(out, static_cast<std::uint32_t>(config.kernel));
    put_u32(out, static_cast<std::uint32_t>(config.padding));
    put_u32(out, static_cast<std::uint32_t>(config.fc_widths.size()));
    for (const std::size_t w : config.fc_widths) {
        put_u32(out, static_cast<std::uint32_t>(w));
    }
    put_f64(out, config.dropout_rate);
    put_u32(out, static_cast<std::uint32_t>(config.num_classes));
    put_u64(out, config.seed);
    return out;
}

ModelConfig decode_config(Reader& reader) {
    ModelConfig config;
    config.input_size = reader.u32();
    config.channels = reader.u32();
    const std::uint32_t conv_count = reader.u32();
    reader.require(static_cast<std::size_t>(conv_count) * 4);
    config.conv_filters.resize(conv_count);
    for (std::size_t& f : config.conv_filters) {
        f = reader.u32();
    }
    config.kernel = reader.u32();
    config.padding = reader.u32();
    const std::uint32_t fc_count = reader.u32();
    reader.require(static_cast<std::size_t>(fc_count) * 4);
    config.fc_widths.resize(fc_count);
    for (std::size_t& w : config.fc_widths) {
        w = reader.u32();
    }
    config.dropout_rate = reader.f64();
    config.num_classes = reader.u32();
    config.seed = reader.u64();
    return config;
}

}  // namespace

void save_checkpoint(Model<float>& model, const std::vector<std::string>& class_names,
                     const std::filesystem::path& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    out += encode_config(model.config());
    put_u32(out, static_cast<std::uint32_t>(class_names.size()));
    for (const std::string& name : class_names) {
        put_string(out, name);
    }
    const std::vector<Param<float>*> params = model.parameters();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const Param<float>* p : params) {
        put_string(out, p->name);
        put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
        for (const std::size_t extent : p->value.shape()) {
            put_u32(out, static_cast<std::uint32_t>(extent));
        }
        for (const float v : p->value) {
            put_f32(out, v);
        }
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw ArtifactError(str_printf("cannot write checkpoint '%s'", path.string().c_str()));
    }
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) {
        throw ArtifactError(str_printf("failed writing checkpoint '%s'",
                                       path.string().c_str()));
    }
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw ArtifactError(str_printf("cannot open checkpoint '%s'", path.string().c_str()));
    }
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader reader(path, std::move(bytes));

    char magic[4];
    reader.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw ArtifactError(str_printf("checkpoint '%s' has bad magic",
                                       path.string().c_str()));
    }
    const std::uint32_t version = reader.u32();
    if (version != kVersion) {
        throw ArtifactError(str_printf("checkpoint '%s' has unsupported version %u",
                                       path.string().c_str(), version));
    }
    const ModelConfig config = decode_config(reader);
    const std::uint32_t name_count = reader.u32();
    reader.require(static_cast<std::size_t>(name_count) * 4);  // each name needs a length
    std::vector<std::string> class_names(name_count);
    for (std::string& name : class_names) {
        name = reader.string();
    }

    Model<float> model = Model<float>::build(config);
    const std::vector<Param<float>*> params = model.parameters();
    const std::uint32_t stored = reader.u32();
    if (stored != params.size()) {
        throw ArtifactError(str_printf(
            "checkpoint '%s' shape mismatch: stores %u parameters, model has %zu",
            path.string().c_str(), stored, params.size()));
    }
    for (Param<float>* p : params) {
        const std::string name = reader.string();
        if (name != p->name) {
            throw ArtifactError(str_printf(
                "checkpoint '%s' shape mismatch: parameter '%s' where '%s' expected",
                path.string().c_str(), name.c_str(), p->name.c_str()));
        }
        const std::uint32_t rank = reader.u32();
        reader.require(static_cast<std::size_t>(rank) * 4);
        std::vector<std::size_t> shape(rank);
        for (std::size_t& extent : shape) {
            extent = reader.u32();
        }
        if (shape != p->value.shape()) {
            throw ArtifactError(str_printf(
                "checkpoint '%s' shape mismatch: parameter '%s' stored as %s, model expects %s",
                path.string().c_str(), name.c_str(), shape_to_string(shape).c_str(),
                shape_to_string(p->value.shape()).c_str()));
        }
        for (float& v : p->value) {
            v = reader.f32();
        }
    }
    if (!reader.exhausted()) {
        throw ArtifactError(str_printf("checkpoint '%s' has trailing bytes",
                                       path.string().c_str()));
    }
    return {std::move(model), std::move(class_names)};
}

void require_compatible(const ModelConfig& stored, const ModelConfig& expected) {
    if (stored.input_size != expected.input_size || stored.channels != expected.channels ||
        stored.conv_filters != expected.conv_filters || stored.kernel != expected.kernel ||
        stored.padding != expected.padding || stored.fc_widths != expected.fc_widths ||
        stored.num_classes != expected.num_classes) {
        throw ArtifactError(str_printf(
            "checkpoint config mismatch: stored input %zu, %zu conv blocks, %zu classes vs "
            "expected input %zu, %zu conv blocks, %zu classes",
            stored.input_size, stored.conv_filters.size(), stored.num_classes,
            expected.input_size, expected.conv_filters.size(), expected.num_classes));
    }
}

}  // namespace xrnet
