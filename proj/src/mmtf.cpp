// SPDX-License-Identifier: Apache-2.0
#include "fedmm/mmtf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "fedmm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "container IO assumes a little-endian host");

namespace fedmm::mmtf {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;
constexpr std::uint8_t kDtypeF32 = 2;

class Reader {
public:
    Reader(const std::vector<unsigned char>& buf, const std::string& path)
        : buf_(buf), path_(path) {}

    template <typename T>
    T read(const char* what) {
        T v;
        take(&v, sizeof(T), what);
        return v;
    }

    void take(void* dst, std::size_t n, const char* what) {
        if (n > buf_.size() - pos_) {
            throw CorruptionError(path_ + ": truncated while reading " + std::string(what) +
                                  " at byte " + std::to_string(pos_));
        }
        std::memcpy(dst, buf_.data() + pos_, n);
        pos_ += n;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::vector<unsigned char>& buf_;
    const std::string& path_;
    std::size_t pos_ = 0;
};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void write_file(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");

    out.write(kMagic, 4);
    put(out, kVersion);
    put(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw DataError("tensor name too long for container: " + name.substr(0, 64) + "...");
        }
        put(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put(out, kDtypeF64);
        put(out, static_cast<std::uint8_t>(tensor.ndim()));
        for (std::size_t d : tensor.shape()) put(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    }
    if (!out) throw DataError("write failed for " + path.string());
}

void write_file(const std::filesystem::path& path, const ParamSet& params) {
    std::vector<NamedTensor> tensors;
    tensors.reserve(params.size());
    for (const ParamSet::Entry& e : params) tensors.emplace_back(e.name, e.tensor);
    write_file(path, tensors);
}

std::vector<NamedTensor> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    const std::string path_str = path.string();
    Reader r(buf, path_str);

    char magic[4];
    r.take(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(path_str + ": bad magic bytes (not a tensor container)");
    }
    const auto version = r.read<std::uint32_t>("version");
    if (version != kVersion) {
        throw FormatError(path_str + ": unsupported container version " + std::to_string(version));
    }
    const auto count = r.read<std::uint32_t>("tensor count");

    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.read<std::uint16_t>("name length");
        std::string name(name_len, '\0');
        r.take(name.data(), name_len, "name");
        const auto dtype = r.read<std::uint8_t>("dtype");
        if (dtype != kDtypeF64 && dtype != kDtypeF32) {
            throw FormatError(path_str + ": unknown dtype code " + std::to_string(dtype) +
                              " for tensor '" + name + "'");
        }
        const auto ndim = r.read<std::uint8_t>("ndim");
        std::vector<std::size_t> shape(ndim);
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const auto dim = r.read<std::uint64_t>("dim");
            if (dim == 0 || dim > (std::uint64_t{1} << 32) ||
                numel > std::numeric_limits<std::size_t>::max() / dim) {
                throw CorruptionError(path_str + ": implausible dimension " + std::to_string(dim) +
                                      " for tensor '" + name + "' at byte " +
                                      std::to_string(r.pos()));
            }
            shape[d] = static_cast<std::size_t>(dim);
            numel *= shape[d];
        }
        const std::size_t elem = dtype == kDtypeF64 ? sizeof(double) : sizeof(float);
        if (numel > r.remaining() / elem) {
            throw CorruptionError(path_str + ": truncated payload for tensor '" + name +
                                  "' at byte " + std::to_string(r.pos()) + " (need " +
                                  std::to_string(numel * elem) + " bytes, have " +
                                  std::to_string(r.remaining()) + ")");
        }
        std::vector<double> data(numel);
        if (dtype == kDtypeF64) {
            r.take(data.data(), numel * sizeof(double), "payload");
        } else {
            std::vector<float> f32(numel);
            r.take(f32.data(), numel * sizeof(float), "payload");
            for (std::size_t k = 0; k < numel; ++k) data[k] = static_cast<double>(f32[k]);
        }
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (r.remaining() != 0) {
        throw CorruptionError(path_str + ": " + std::to_string(r.remaining()) +
                              " trailing bytes after last tensor at byte " + std::to_string(r.pos()));
    }
    return out;
}

ParamSet read_param_set(const std::filesystem::path& path) {
    ParamSet params;
    for (auto& [name, tensor] : read_file(path)) {
        params.add(std::move(name), std::move(tensor));
    }
    return params;
}

}  // namespace fedmm::mmtf
