#include "hashodf/nifti.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/log.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <vector>

namespace hashodf {

namespace {

constexpr int kHeaderSize = 348;

std::vector<char> read_all(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open " + path.string());
  std::vector<char> bytes;
  char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) bytes.insert(bytes.end(), buf, buf + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw FormatError("read error (corrupt gzip stream?) in " + path.string());
  return bytes;
}

class HeaderReader {
public:
  HeaderReader(const char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(int offset) const {
    T value;
    std::memcpy(&value, bytes_ + offset, sizeof(T));
    if (swap_ && sizeof(T) > 1) {
      auto* p = reinterpret_cast<unsigned char*>(&value);
      std::reverse(p, p + sizeof(T));
    }
    return value;
  }
  std::string text(int offset, int length) const {
    const char* p = bytes_ + offset;
    return std::string(p, strnlen(p, static_cast<std::size_t>(length)));
  }

private:
  const char* bytes_;
  bool swap_;
};

int bytes_per_voxel(NiftiType t) {
  switch (t) {
    case NiftiType::Uint8: return 1;
    case NiftiType::Int16: return 2;
    case NiftiType::Float32: return 4;
    case NiftiType::Float64: return 8;
  }
  return 0;
}

Eigen::Matrix4d quaternion_affine(const HeaderReader& h) {
  const double b = h.get<float>(256), c = h.get<float>(260), d = h.get<float>(264);
  const double a = std::sqrt(std::max(0.0, 1.0 - b * b - c * c - d * d));
  Eigen::Matrix3d r;
  r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),  //
      2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),    //
      2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
  double qfac = h.get<float>(76);
  if (qfac == 0.0) qfac = 1.0;
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.col(0).head<3>() = r.col(0) * h.get<float>(80);
  m.col(1).head<3>() = r.col(1) * h.get<float>(84);
  m.col(2).head<3>() = r.col(2) * h.get<float>(88) * qfac;
  m.col(3).head<3>() << h.get<float>(268), h.get<float>(272), h.get<float>(276);
  return m;
}

struct ParsedHeader {
  NiftiHeader info;
  bool swap = false;
  bool single = true;
  double vox_offset = 0.0;
  double slope = 1.0;
  double inter = 0.0;
};

ParsedHeader parse_header(const char* bytes, std::size_t size, const std::filesystem::path& path) {
  if (size < kHeaderSize) throw FormatError("sizeof_hdr: file shorter than a NIfTI-1 header: " + path.string());

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes, 4);
  const bool swap = sizeof_hdr != kHeaderSize;
  if (swap && static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr))) != kHeaderSize) {
    throw FormatError("sizeof_hdr: expected 348, got " + std::to_string(sizeof_hdr) + " in " + path.string());
  }
  const HeaderReader h(bytes, swap);
  const std::string magic(bytes + 344, 4);
  const bool single = magic == std::string("n+1\0", 4);
  const bool pair = magic == std::string("ni1\0", 4);
  if (!single && !pair) throw FormatError("magic: not a NIfTI-1 file: " + path.string());

  ParsedHeader p;
  p.swap = swap;
  p.single = single;
  NiftiHeader& info = p.info;
  const int ndim = h.get<std::int16_t>(40);
  if (ndim < 1 || ndim > 7) throw FormatError("dim[0]: out of range (" + std::to_string(ndim) + ")");
  for (int i = 1; i <= ndim; ++i) {
    const int d = h.get<std::int16_t>(40 + 2 * i);
    if (d < 1) throw FormatError("dim[" + std::to_string(i) + "]: must be >= 1");
    if (i <= 4) {
      info.dims[static_cast<std::size_t>(i - 1)] = d;
    } else if (d != 1) {
      throw FormatError("dim[" + std::to_string(i) + "]: volumes beyond 4-D are not supported");
    }
  }

  const auto code = h.get<std::int16_t>(70);
  switch (code) {
    case 2: info.datatype = NiftiType::Uint8; break;
    case 4: info.datatype = NiftiType::Int16; break;
    case 16: info.datatype = NiftiType::Float32; break;
    case 64: info.datatype = NiftiType::Float64; break;
    default: throw FormatError("datatype: unsupported code " + std::to_string(code));
  }
  if (h.get<std::int16_t>(72) != 8 * bytes_per_voxel(info.datatype)) throw FormatError("bitpix: inconsistent with datatype");

  for (int i = 0; i < 3; ++i) info.voxel_size[static_cast<std::size_t>(i)] = std::abs(h.get<float>(80 + 4 * i));
  info.intent_name = h.text(328, 16);

  if (h.get<std::int16_t>(254) > 0) {
    info.affine_source = 2;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) info.affine(r, c) = h.get<float>(280 + 16 * r + 4 * c);
    }
  } else if (h.get<std::int16_t>(252) > 0) {
    info.affine_source = 1;
    info.affine = quaternion_affine(h);
  } else {
    logger().warn("{}: neither sform nor qform set; using identity affine", path.string());
  }

  p.vox_offset = h.get<float>(108);
  p.slope = h.get<float>(112);
  p.inter = h.get<float>(116);
  return p;
}

}  // namespace

NiftiHeader read_nifti_header(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open " + path.string());
  char buf[kHeaderSize];
  const int n = gzread(f, buf, kHeaderSize);
  gzclose(f);
  return parse_header(buf, n < 0 ? 0 : static_cast<std::size_t>(n), path).info;
}

NiftiImage load_nifti(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_all(path);
  const ParsedHeader ph = parse_header(bytes.data(), bytes.size(), path);
  const bool single = ph.single;
  const bool swap = ph.swap;
  const NiftiType type = ph.info.datatype;
  const int bpv = bytes_per_voxel(type);

  NiftiImage img;
  img.datatype = type;
  img.affine_source = ph.info.affine_source;
  img.volume = Volume(ph.info.dims);
  Volume& vol = img.volume;
  vol.voxel_size = ph.info.voxel_size;
  vol.intent_name = ph.info.intent_name;
  vol.affine = ph.info.affine;

  std::vector<char> image_bytes;
  const char* data = nullptr;
  const std::size_t count = vol.data.size();
  const std::size_t need = count * static_cast<std::size_t>(bpv);
  if (single) {
    const double offset = ph.vox_offset;
    if (offset < kHeaderSize || offset != std::floor(offset)) throw FormatError("vox_offset: invalid value");
    const auto start = static_cast<std::size_t>(offset);
    if (bytes.size() < start + need) throw FormatError("vox_offset/dim: file truncated in image data");
    data = bytes.data() + start;
  } else {
    auto img_path = path;
    std::string name = img_path.filename().string();
    const auto dot = name.find(".hdr");
    if (dot == std::string::npos) throw FormatError("magic: ni1 header must be named *.hdr");
    name.replace(dot, 4, ".img");
    image_bytes = read_all(img_path.replace_filename(name));
    if (image_bytes.size() < need) throw FormatError("dim: image file truncated");
    data = image_bytes.data();
  }

  double slope = ph.slope;
  double inter = ph.inter;
  if (slope == 0.0 || !std::isfinite(slope)) {
    slope = 1.0;
    inter = 0.0;
  }
  if (!std::isfinite(inter)) inter = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const HeaderReader at(data + i * static_cast<std::size_t>(bpv), swap);
    double v = 0.0;
    switch (type) {
      case NiftiType::Uint8: v = at.get<std::uint8_t>(0); break;
      case NiftiType::Int16: v = at.get<std::int16_t>(0); break;
      case NiftiType::Float32: v = at.get<float>(0); break;
      case NiftiType::Float64: v = at.get<double>(0); break;
    }
    vol.data[i] = slope == 1.0 && inter == 0.0 ? v : v * slope + inter;
  }
  return img;
}

namespace {

template <typename T>
void put(std::vector<char>& buf, int offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
void append_values(std::vector<char>& buf, const std::vector<double>& data) {
  const std::size_t start = buf.size();
  buf.resize(start + data.size() * sizeof(T));
  for (std::size_t i = 0; i < data.size(); ++i) {
    T v;
    if constexpr (std::is_integral_v<T>) {
      const double clamped = std::clamp(std::round(data[i]), static_cast<double>(std::numeric_limits<T>::min()),
                                        static_cast<double>(std::numeric_limits<T>::max()));
      v = static_cast<T>(clamped);
    } else {
      v = static_cast<T>(data[i]);
    }
    std::memcpy(buf.data() + start + i * sizeof(T), &v, sizeof(T));
  }
}

}  // namespace

void save_nifti(const Volume& volume, const std::filesystem::path& path, NiftiType datatype) {
  static_assert(std::endian::native == std::endian::little, "NIfTI writer assumes a little-endian host");
  if (volume.data.size() != volume.voxels() * static_cast<std::size_t>(volume.channels())) {
    throw InputError("volume data size does not match dims");
  }
  for (int d : volume.dims) {
    if (d < 1 || d > std::numeric_limits<std::int16_t>::max()) throw InputError("volume dimension out of NIfTI range");
  }
  std::vector<char> buf(352, '\0');
  put<std::int32_t>(buf, 0, kHeaderSize);
  put<char>(buf, 38, 'r');
  const int ndim = volume.channels() > 1 ? 4 : 3;
  put<std::int16_t>(buf, 40, static_cast<std::int16_t>(ndim));
  for (int i = 0; i < 7; ++i) {
    const int d = i < 4 ? volume.dims[static_cast<std::size_t>(i)] : 1;
    put<std::int16_t>(buf, 42 + 2 * i, static_cast<std::int16_t>(d));
  }
  const int bpv = bytes_per_voxel(datatype);
  put<std::int16_t>(buf, 70, static_cast<std::int16_t>(datatype));
  put<std::int16_t>(buf, 72, static_cast<std::int16_t>(8 * bpv));
  put<float>(buf, 76, 1.0f);
  for (int i = 0; i < 3; ++i) put<float>(buf, 80 + 4 * i, static_cast<float>(volume.voxel_size[static_cast<std::size_t>(i)]));
  put<float>(buf, 92, 1.0f);
  put<float>(buf, 108, 352.0f);
  put<float>(buf, 112, 1.0f);
  put<char>(buf, 123, 2);  // mm
  put<std::int16_t>(buf, 252, 0);
  put<std::int16_t>(buf, 254, 1);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) put<float>(buf, 280 + 16 * r + 4 * c, static_cast<float>(volume.affine(r, c)));
  }
  std::strncpy(buf.data() + 328, volume.intent_name.c_str(), 16);
  std::memcpy(buf.data() + 344, "n+1\0", 4);

  switch (datatype) {
    case NiftiType::Uint8: append_values<std::uint8_t>(buf, volume.data); break;
    case NiftiType::Int16: append_values<std::int16_t>(buf, volume.data); break;
    case NiftiType::Float32: append_values<float>(buf, volume.data); break;
    case NiftiType::Float64: append_values<double>(buf, volume.data); break;
  }

  const bool gz = path.extension() == ".gz";
  gzFile f = gzopen(path.c_str(), gz ? "wb6" : "wbT");
  if (!f) throw FormatError("cannot open for writing: " + path.string());
  std::size_t written = 0;
  while (written < buf.size()) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(buf.size() - written, 1u << 30));
    const int n = gzwrite(f, buf.data() + written, chunk);
    if (n <= 0) {
      gzclose(f);
      throw FormatError("write failed: " + path.string());
    }
    written += static_cast<std::size_t>(n);
  }
  if (gzclose(f) != Z_OK) throw FormatError("write failed: " + path.string());
}

}  // namespace hashodf
