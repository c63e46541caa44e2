#include "neuroagent/volume/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "neuroagent/volume/errors.hpp"

namespace neuroagent::volume {

static_assert(std::endian::native == std::endian::little, "NIfTI codec assumes a little-endian host");

namespace {

// Byte offsets of the NIfTI-1 header fields this codec touches.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffSrow = 280;
constexpr std::size_t kOffMagic = 344;

constexpr std::int16_t kDtUInt8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

template <typename T>
void put(std::vector<char>& buf, std::size_t off, T value) {
    std::memcpy(buf.data() + off, &value, sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t off) {
    T value;
    std::memcpy(&value, buf.data() + off, sizeof(T));
    return value;
}

std::int16_t datatype_code(DType d) {
    switch (d) {
        case DType::UInt8: return kDtUInt8;
        case DType::Int16: return kDtInt16;
        case DType::Float32: return kDtFloat32;
    }
    return 0;
}

}  // namespace

std::vector<char> encode_nifti(const VoxelVolume& volume) {
    volume.validate();
    const std::size_t bpp = bytes_per_voxel(volume.dtype);
    std::vector<char> buf(kNiftiVoxOffset + volume.data.size() * bpp, 0);

    put<std::int32_t>(buf, kOffSizeofHdr, static_cast<std::int32_t>(kNiftiHeaderSize));
    const auto& dims = volume.grid.dims();
    put<std::int16_t>(buf, kOffDim, 3);
    for (int a = 0; a < 3; ++a) put<std::int16_t>(buf, kOffDim + 2 * (a + 1), static_cast<std::int16_t>(dims[a]));
    for (int a = 4; a < 8; ++a) put<std::int16_t>(buf, kOffDim + 2 * a, 1);
    put<std::int16_t>(buf, kOffDatatype, datatype_code(volume.dtype));
    put<std::int16_t>(buf, kOffBitpix, static_cast<std::int16_t>(8 * bpp));
    const Vec3 sp = volume.grid.spacing();
    put<float>(buf, kOffPixdim, 1.0f);
    for (int a = 0; a < 3; ++a) put<float>(buf, kOffPixdim + 4 * (a + 1), static_cast<float>(sp[a]));
    put<float>(buf, kOffVoxOffset, static_cast<float>(kNiftiVoxOffset));
    put<std::int16_t>(buf, kOffSformCode, 1);
    const auto& m = volume.grid.affine().m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) put<float>(buf, kOffSrow + 16 * r + 4 * c, static_cast<float>(m[r][c]));
    std::memcpy(buf.data() + kOffMagic, "n+1\0", 4);

    char* out = buf.data() + kNiftiVoxOffset;
    switch (volume.dtype) {
        case DType::UInt8:
            for (std::size_t n = 0; n < volume.data.size(); ++n)
                out[n] = static_cast<char>(static_cast<std::uint8_t>(volume.data[n]));
            break;
        case DType::Int16:
            for (std::size_t n = 0; n < volume.data.size(); ++n) {
                const auto v = static_cast<std::int16_t>(volume.data[n]);
                std::memcpy(out + 2 * n, &v, 2);
            }
            break;
        case DType::Float32:
            std::memcpy(out, volume.data.data(), volume.data.size() * 4);
            break;
    }
    return buf;
}

VoxelVolume decode_nifti(const std::vector<char>& bytes, const std::string& source) {
    if (bytes.size() < kNiftiHeaderSize) throw FormatError(source + ": file shorter than NIfTI header");
    const auto sizeof_hdr = get<std::int32_t>(bytes, kOffSizeofHdr);
    if (sizeof_hdr != static_cast<std::int32_t>(kNiftiHeaderSize)) {
        const auto u = static_cast<std::uint32_t>(sizeof_hdr);
        const std::uint32_t swapped = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
        if (swapped == kNiftiHeaderSize)
            throw UnsupportedError(source + ": big-endian NIfTI is not supported");
        throw FormatError(source + ": bad sizeof_hdr");
    }
    if (std::memcmp(bytes.data() + kOffMagic, "n+1\0", 4) != 0)
        throw FormatError(source + ": bad magic (expected single-file n+1)");

    const auto ndim = get<std::int16_t>(bytes, kOffDim);
    if (ndim < 1 || ndim > 7) throw FormatError(source + ": bad dim[0]");
    Index3 dims{1, 1, 1};
    for (int a = 0; a < ndim; ++a) {
        const auto d = get<std::int16_t>(bytes, kOffDim + 2 * (a + 1));
        if (d <= 0) throw FormatError(source + ": non-positive dimension");
        if (a < 3)
            dims[a] = d;
        else if (d != 1)
            throw UnsupportedError(source + ": only 3D volumes are supported");
    }

    const auto code = get<std::int16_t>(bytes, kOffDatatype);
    DType dtype;
    switch (code) {
        case kDtUInt8: dtype = DType::UInt8; break;
        case kDtInt16: dtype = DType::Int16; break;
        case kDtFloat32: dtype = DType::Float32; break;
        default: throw UnsupportedError(source + ": unsupported datatype " + std::to_string(code));
    }
    const std::size_t bpp = bytes_per_voxel(dtype);
    if (get<std::int16_t>(bytes, kOffBitpix) != static_cast<std::int16_t>(8 * bpp))
        throw FormatError(source + ": bitpix disagrees with datatype");

    const float vox_offset = get<float>(bytes, kOffVoxOffset);
    if (!(vox_offset >= static_cast<float>(kNiftiHeaderSize)) || vox_offset != std::floor(vox_offset))
        throw FormatError(source + ": bad vox_offset");
    const auto offset = static_cast<std::size_t>(vox_offset);

    Affine affine;
    if (get<std::int16_t>(bytes, kOffSformCode) > 0) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) affine.m[r][c] = get<float>(bytes, kOffSrow + 16 * r + 4 * c);
    } else {
        for (int a = 0; a < 3; ++a) affine.m[a][a] = get<float>(bytes, kOffPixdim + 4 * (a + 1));
    }
    Grid grid(dims, affine);  // throws UnsupportedError for oblique geometry

    const std::size_t nvox = grid.voxel_count();
    if (bytes.size() < offset || bytes.size() - offset < nvox * bpp)
        throw FormatError(source + ": data section truncated (" + std::to_string(bytes.size() - std::min(bytes.size(), offset)) +
                          " bytes, need " + std::to_string(nvox * bpp) + ")");

    VoxelVolume v(grid, dtype);
    const char* in = bytes.data() + offset;
    switch (dtype) {
        case DType::UInt8:
            for (std::size_t n = 0; n < nvox; ++n) v.data[n] = static_cast<std::uint8_t>(in[n]);
            break;
        case DType::Int16:
            for (std::size_t n = 0; n < nvox; ++n) {
                std::int16_t x;
                std::memcpy(&x, in + 2 * n, 2);
                v.data[n] = x;
            }
            break;
        case DType::Float32:
            std::memcpy(v.data.data(), in, nvox * 4);
            break;
    }
    return v;
}

VoxelVolume read_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_nifti(bytes, path.string());
}

void write_volume(const VoxelVolume& volume, const std::filesystem::path& path) {
    const auto bytes = encode_nifti(volume);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace neuroagent::volume
