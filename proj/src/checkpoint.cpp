// Checkpoint layout (little-endian):
//
//   "OCBNMODL" | u32 version | u32 id_len | id bytes | u32 seed |
//   u64 param_count | f32 * param_count | f64 final_metric

#include <bit>
#include <cstring>
#include <fstream>

#include "occbench/model.hpp"

namespace occbench::model {

namespace {

constexpr char kMagic[8] = {'O', 'C', 'B', 'N', 'M', 'O', 'D', 'L'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void append_bytes(std::vector<std::uint8_t>& out, const void* src, std::size_t n) {
    const std::size_t at = out.size();
    out.resize(at + n);
    if (n > 0) {
        std::memcpy(out.data() + at, src, n);
    }
}

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
    append_bytes(out, &v, sizeof(U));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename U>
    U get(const char* what) {
        need(sizeof(U), what);
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorCode::CorruptPayload, std::string("checkpoint truncated while reading ") + what);
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out;
    out.reserve(40 + ckpt.arch_id.size() + 4 * ckpt.payload.size());
    append_bytes(out, kMagic, sizeof kMagic);
    put<std::uint32_t>(out, ckpt.version);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arch_id.size()));
    append_bytes(out, ckpt.arch_id.data(), ckpt.arch_id.size());
    put<std::uint32_t>(out, ckpt.seed);
    put<std::uint64_t>(out, ckpt.payload.size());
    append_bytes(out, ckpt.payload.data(), 4 * ckpt.payload.size());
    put<double>(out, ckpt.final_metric);
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto magic = r.take(8, "magic");
    if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
        throw Error(ErrorCode::WrongMagic, "not an OCBNMODL checkpoint");
    }
    Checkpoint c;
    c.version = r.get<std::uint32_t>("version");
    if (c.version != kCheckpointVersion) {
        throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(c.version) +
                                                    ", expected " + std::to_string(kCheckpointVersion));
    }
    const auto id_len = r.get<std::uint32_t>("architecture id length");
    const auto id = r.take(id_len, "architecture id");
    c.arch_id.assign(id.begin(), id.end());
    c.seed = r.get<std::uint32_t>("seed");
    const auto count = r.get<std::uint64_t>("parameter count");
    if (count > r.remaining() / 4) {
        throw Error(ErrorCode::CorruptPayload, "payload shorter than the declared " + std::to_string(count) +
                                                   " parameters");
    }
    const auto payload = r.take(static_cast<std::size_t>(count) * 4, "payload");
    c.payload.resize(static_cast<std::size_t>(count));
    std::memcpy(c.payload.data(), payload.data(), payload.size());
    c.final_metric = r.get<double>("final metric");
    if (r.remaining() != 0) {
        throw Error(ErrorCode::CorruptPayload, std::to_string(r.remaining()) + " trailing bytes");
    }
    return c;
}

Checkpoint make_checkpoint(const GradModel& model, std::uint32_t seed, double final_metric) {
    Checkpoint c;
    c.arch_id = std::string(arch_id(model.arch())) + ":" + std::to_string(model.classes());
    c.seed = seed;
    c.final_metric = final_metric;
    c.payload.reserve(model.param_count());
    for (const auto& p : model.params()) {
        c.payload.insert(c.payload.end(), p.data().begin(), p.data().end());
    }
    return c;
}

GradModel model_from_checkpoint(const Checkpoint& ckpt) {
    const auto colon = ckpt.arch_id.find(':');
    if (colon == std::string::npos) {
        throw Error(ErrorCode::UnknownArchitecture, "malformed architecture id '" + ckpt.arch_id + "'");
    }
    const Arch arch = parse_arch(std::string_view(ckpt.arch_id).substr(0, colon));
    int classes = 0;
    try {
        classes = std::stoi(ckpt.arch_id.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error(ErrorCode::UnknownArchitecture, "malformed class count in '" + ckpt.arch_id + "'");
    }
    const auto shapes = GradModel::param_shapes(arch, classes);
    std::size_t total = 0;
    for (const auto& s : shapes) {
        total += shape_size(s);
    }
    if (total != ckpt.payload.size()) {
        throw Error(ErrorCode::CorruptPayload, "payload holds " + std::to_string(ckpt.payload.size()) +
                                                   " parameters, " + ckpt.arch_id + " needs " + std::to_string(total));
    }
    std::vector<Tensor<float>> params;
    auto it = ckpt.payload.begin();
    for (const auto& s : shapes) {
        const auto n = static_cast<std::ptrdiff_t>(shape_size(s));
        params.emplace_back(s, std::vector<float>(it, it + n));
        it += n;
    }
    return GradModel(arch, classes, std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const GradModel& model, std::uint32_t seed,
                     double final_metric) {
    const auto bytes = encode_checkpoint(make_checkpoint(model, seed, final_metric));
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

GradModel load_checkpoint(const std::filesystem::path& path) {
    return model_from_checkpoint(read_checkpoint(path));
}

} // namespace occbench::model
