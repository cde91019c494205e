#include "shadeharm/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace shadeharm {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_all(const std::string& path, const void* data, size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) fail(path, "short write");
}

bool host_is_little_endian() {
  const std::uint16_t one = 1;
  return *reinterpret_cast<const unsigned char*>(&one) == 1;
}

float byteswap_float(float v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  std::swap(b[0], b[3]);
  std::swap(b[1], b[2]);
  std::memcpy(&v, b, 4);
  return v;
}

// --- PFM ---

struct PfmHeader {
  int width = 0, height = 0, channels = 0;
  float scale = -1.0f;
  size_t data_offset = 0;
};

PfmHeader parse_pfm_header(const std::string& path, const std::vector<unsigned char>& bytes) {
  PfmHeader h;
  // Header tokens are whitespace separated; a single whitespace byte follows
  // the scale, then raw floats begin.
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) fail(path, "truncated PFM header");
    return std::string(bytes.begin() + static_cast<long>(start), bytes.begin() + static_cast<long>(pos));
  };
  const std::string magic = next_token();
  if (magic == "PF") {
    h.channels = 3;
  } else if (magic == "Pf") {
    h.channels = 1;
  } else {
    fail(path, "not a PFM file (magic '" + magic + "')");
  }
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.scale = std::stof(next_token());
  } catch (const std::exception&) {
    fail(path, "malformed PFM header fields");
  }
  if (h.width <= 0 || h.height <= 0) fail(path, "bad PFM dimensions");
  if (h.scale == 0.0f) fail(path, "PFM scale must be nonzero");
  if (pos >= bytes.size()) fail(path, "truncated PFM header");
  ++pos;  // single whitespace after scale
  h.data_offset = pos;
  const size_t need = static_cast<size_t>(h.width) * static_cast<size_t>(h.height) *
                      static_cast<size_t>(h.channels) * 4;
  if (bytes.size() - pos < need) fail(path, "truncated PFM payload");
  return h;
}

void decode_pfm(const std::string& path, std::vector<Planef*> planes) {
  const auto bytes = read_all(path);
  const PfmHeader h = parse_pfm_header(path, bytes);
  if (static_cast<int>(planes.size()) != h.channels) {
    fail(path, "expected " + std::to_string(planes.size()) + "-channel PFM, file has " +
                   std::to_string(h.channels));
  }
  const bool file_le = h.scale < 0.0f;
  const bool swap = file_le != host_is_little_endian();
  const float mul = std::fabs(h.scale) == 1.0f ? 1.0f : std::fabs(h.scale);
  for (auto* p : planes) *p = Planef::Zero(h.height, h.width);
  const float* src = reinterpret_cast<const float*>(bytes.data() + h.data_offset);
  size_t idx = 0;
  for (int row = h.height - 1; row >= 0; --row) {  // file rows are bottom-up
    for (int x = 0; x < h.width; ++x) {
      for (int c = 0; c < h.channels; ++c) {
        float v = src[idx++];
        if (swap) v = byteswap_float(v);
        (*planes[static_cast<size_t>(c)])(row, x) = v * mul;
      }
    }
  }
}

void encode_pfm(const std::string& path, const std::vector<const Planef*>& planes) {
  const Eigen::Index hgt = planes[0]->rows(), wid = planes[0]->cols();
  if (hgt == 0 || wid == 0) fail(path, "refusing to write empty PFM");
  std::string header = (planes.size() == 3 ? "PF\n" : "Pf\n") + std::to_string(wid) + " " +
                       std::to_string(hgt) + "\n-1.0\n";
  std::vector<unsigned char> out(header.size() +
                                 static_cast<size_t>(hgt) * static_cast<size_t>(wid) * planes.size() * 4);
  std::memcpy(out.data(), header.data(), header.size());
  float* dst = reinterpret_cast<float*>(out.data() + header.size());
  const bool swap = !host_is_little_endian();
  size_t idx = 0;
  for (Eigen::Index row = hgt - 1; row >= 0; --row) {
    for (Eigen::Index x = 0; x < wid; ++x) {
      for (const Planef* p : planes) {
        float v = (*p)(row, x);
        if (swap) v = byteswap_float(v);
        dst[idx++] = v;
      }
    }
  }
  write_all(path, out.data(), out.size());
}

// --- Radiance RGBE ---

// Ward's reference decode: component = v * 2^(e - 136).
float rgbe_component(unsigned char v, unsigned char e) {
  if (e == 0) return 0.0f;
  return std::ldexp(static_cast<float>(v), static_cast<int>(e) - 136);
}

}  // namespace

void write_pfm(const std::string& path, const Planef& gray) { encode_pfm(path, {&gray}); }

void write_pfm(const std::string& path, const Image3& rgb) {
  encode_pfm(path, {&rgb.r, &rgb.g, &rgb.b});
}

Planef read_pfm_gray(const std::string& path) {
  Planef p;
  decode_pfm(path, {&p});
  return p;
}

Image3 read_pfm_rgb(const std::string& path) {
  Image3 img;
  decode_pfm(path, {&img.r, &img.g, &img.b});
  return img;
}

int pfm_channels(const std::string& path) {
  const auto bytes = read_all(path);
  return parse_pfm_header(path, bytes).channels;
}

Image3 read_hdr(const std::string& path) {
  const auto bytes = read_all(path);
  size_t pos = 0;
  auto read_line = [&]() -> std::string {
    std::string line;
    while (pos < bytes.size() && bytes[pos] != '\n') line.push_back(static_cast<char>(bytes[pos++]));
    if (pos < bytes.size()) ++pos;
    return line;
  };
  std::string magic = read_line();
  if (magic.rfind("#?", 0) != 0) fail(path, "missing Radiance magic line");
  double exposure = 1.0;
  bool format_ok = false;
  for (;;) {
    if (pos >= bytes.size()) fail(path, "truncated header");
    std::string line = read_line();
    if (line.empty()) break;
    if (line[0] == '#') continue;
    if (line.rfind("FORMAT=", 0) == 0) {
      format_ok = line == "FORMAT=32-bit_rle_rgbe";
      if (!format_ok) fail(path, "unsupported FORMAT '" + line + "'");
    } else if (line.rfind("EXPOSURE=", 0) == 0) {
      exposure *= std::stod(line.substr(9));
    }
  }
  if (!format_ok) fail(path, "missing FORMAT=32-bit_rle_rgbe");
  int wid = 0, hgt = 0;
  {
    std::string res = read_line();
    std::istringstream ss(res);
    std::string ytag, xtag;
    if (!(ss >> ytag >> hgt >> xtag >> wid) || ytag != "-Y" || xtag != "+X" || wid <= 0 || hgt <= 0) {
      fail(path, "unsupported resolution line '" + res + "'");
    }
  }
  const float inv_exposure = exposure > 0.0 ? static_cast<float>(1.0 / exposure) : 1.0f;

  Image3 img(hgt, wid);
  std::vector<unsigned char> scan(static_cast<size_t>(wid) * 4);
  auto need = [&](size_t n) {
    if (bytes.size() - pos < n) fail(path, "truncated pixel data");
  };
  for (int y = 0; y < hgt; ++y) {
    need(4);
    const unsigned char* head = bytes.data() + pos;
    const bool new_rle = head[0] == 2 && head[1] == 2 && ((head[2] << 8) | head[3]) == wid &&
                         wid >= 8 && wid <= 0x7fff;
    if (new_rle) {
      pos += 4;
      for (int c = 0; c < 4; ++c) {
        int x = 0;
        while (x < wid) {
          need(1);
          unsigned char code = bytes[pos++];
          if (code > 128) {  // run
            need(1);
            const unsigned char value = bytes[pos++];
            int count = code - 128;
            if (x + count > wid) fail(path, "RLE run overflow");
            for (int i = 0; i < count; ++i) scan[static_cast<size_t>(x++) * 4 + static_cast<size_t>(c)] = value;
          } else {  // literal
            int count = code;
            if (count == 0 || x + count > wid) fail(path, "RLE literal overflow");
            need(static_cast<size_t>(count));
            for (int i = 0; i < count; ++i) {
              scan[static_cast<size_t>(x++) * 4 + static_cast<size_t>(c)] = bytes[pos++];
            }
          }
        }
      }
    } else {
      // Flat scanline, possibly with old-style (1,1,1,count) repeat markers.
      int x = 0;
      int repeat_shift = 0;
      while (x < wid) {
        need(4);
        unsigned char p0 = bytes[pos], p1 = bytes[pos + 1], p2 = bytes[pos + 2], p3 = bytes[pos + 3];
        pos += 4;
        if (p0 == 1 && p1 == 1 && p2 == 1) {
          if (x == 0) fail(path, "old-style repeat with no previous pixel");
          int count = static_cast<int>(p3) << repeat_shift;
          repeat_shift += 8;
          if (x + count > wid) fail(path, "old-style repeat overflow");
          for (int i = 0; i < count; ++i) {
            std::memcpy(&scan[static_cast<size_t>(x) * 4], &scan[static_cast<size_t>(x - 1) * 4], 4);
            ++x;
          }
        } else {
          repeat_shift = 0;
          scan[static_cast<size_t>(x) * 4 + 0] = p0;
          scan[static_cast<size_t>(x) * 4 + 1] = p1;
          scan[static_cast<size_t>(x) * 4 + 2] = p2;
          scan[static_cast<size_t>(x) * 4 + 3] = p3;
          ++x;
        }
      }
    }
    for (int x = 0; x < wid; ++x) {
      const unsigned char e = scan[static_cast<size_t>(x) * 4 + 3];
      img.r(y, x) = rgbe_component(scan[static_cast<size_t>(x) * 4 + 0], e) * inv_exposure;
      img.g(y, x) = rgbe_component(scan[static_cast<size_t>(x) * 4 + 1], e) * inv_exposure;
      img.b(y, x) = rgbe_component(scan[static_cast<size_t>(x) * 4 + 2], e) * inv_exposure;
    }
  }
  return img;
}

// --- PNG ---

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::uint32_t get_u32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const unsigned char* data, size_t len) {
  put_u32(out, static_cast<std::uint32_t>(len));
  const size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  if (len > 0) out.insert(out.end(), data, data + len);
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, out.data() + type_pos, static_cast<uInt>(4 + len)));
  put_u32(out, crc);
}

const unsigned char kPngSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void write_png(const std::string& path, int wid, int hgt, int channels,
               const std::vector<unsigned char>& pixels) {
  // Raw stream: filter byte 0 per row. Fixed zlib settings keep the output
  // byte-identical across runs.
  const size_t stride = static_cast<size_t>(wid) * static_cast<size_t>(channels);
  std::vector<unsigned char> raw((stride + 1) * static_cast<size_t>(hgt));
  for (int y = 0; y < hgt; ++y) {
    raw[static_cast<size_t>(y) * (stride + 1)] = 0;
    std::memcpy(&raw[static_cast<size_t>(y) * (stride + 1) + 1], &pixels[static_cast<size_t>(y) * stride], stride);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    fail(path, "zlib compression failed");
  }
  compressed.resize(bound);

  std::vector<unsigned char> out;
  out.insert(out.end(), kPngSignature, kPngSignature + 8);
  unsigned char ihdr[13];
  ihdr[0] = static_cast<unsigned char>(wid >> 24);
  ihdr[1] = static_cast<unsigned char>(wid >> 16);
  ihdr[2] = static_cast<unsigned char>(wid >> 8);
  ihdr[3] = static_cast<unsigned char>(wid);
  ihdr[4] = static_cast<unsigned char>(hgt >> 24);
  ihdr[5] = static_cast<unsigned char>(hgt >> 16);
  ihdr[6] = static_cast<unsigned char>(hgt >> 8);
  ihdr[7] = static_cast<unsigned char>(hgt);
  ihdr[8] = 8;  // bit depth
  ihdr[9] = channels == 1 ? 0 : 2;
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  append_chunk(out, "IHDR", ihdr, 13);
  append_chunk(out, "IDAT", compressed.data(), compressed.size());
  append_chunk(out, "IEND", nullptr, 0);
  write_all(path, out.data(), out.size());
}

struct DecodedPng {
  int width = 0, height = 0, channels = 0;
  std::vector<unsigned char> pixels;  // interleaved, 8-bit
};

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

DecodedPng read_png(const std::string& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSignature, 8) != 0) {
    fail(path, "not a PNG file");
  }
  size_t pos = 8;
  DecodedPng png;
  int bit_depth = 0, color_type = 0;
  std::vector<unsigned char> idat;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = get_u32(&bytes[pos]);
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    if (pos + 12 + len > bytes.size()) fail(path, "truncated chunk");
    const unsigned char* data = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail(path, "bad IHDR");
      png.width = static_cast<int>(get_u32(data));
      png.height = static_cast<int>(get_u32(data + 4));
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) fail(path, "interlaced PNG not supported");
      if (bit_depth != 8) fail(path, "only 8-bit PNG supported");
      switch (color_type) {
        case 0: png.channels = 1; break;
        case 2: png.channels = 3; break;
        case 4: png.channels = 2; break;
        case 6: png.channels = 4; break;
        default: fail(path, "palette PNG not supported");
      }
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (png.width <= 0 || png.height <= 0 || idat.empty()) fail(path, "missing PNG data");

  const size_t stride = static_cast<size_t>(png.width) * static_cast<size_t>(png.channels);
  const size_t raw_size = (stride + 1) * static_cast<size_t>(png.height);
  std::vector<unsigned char> raw(raw_size);
  {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) fail(path, "zlib init failed");
    zs.next_in = idat.data();
    zs.avail_in = static_cast<uInt>(idat.size());
    zs.next_out = raw.data();
    zs.avail_out = static_cast<uInt>(raw.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != raw_size) fail(path, "zlib inflate failed");
  }

  png.pixels.resize(stride * static_cast<size_t>(png.height));
  const int bpp = png.channels;  // bytes per pixel at 8-bit depth
  for (int y = 0; y < png.height; ++y) {
    const unsigned char filter = raw[static_cast<size_t>(y) * (stride + 1)];
    const unsigned char* src = &raw[static_cast<size_t>(y) * (stride + 1) + 1];
    unsigned char* dst = &png.pixels[static_cast<size_t>(y) * stride];
    const unsigned char* prev = y > 0 ? &png.pixels[static_cast<size_t>(y - 1) * stride] : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<size_t>(bpp) ? dst[i - static_cast<size_t>(bpp)] : 0;
      const int b = prev ? prev[i] : 0;
      const int c = (prev && i >= static_cast<size_t>(bpp)) ? prev[i - static_cast<size_t>(bpp)] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: fail(path, "bad PNG filter type");
      }
      dst[i] = static_cast<unsigned char>(v & 0xff);
    }
  }
  return png;
}

}  // namespace

void write_png_rgb8(const std::string& path, const Image3& display) {
  const int hgt = static_cast<int>(display.rows()), wid = static_cast<int>(display.cols());
  if (hgt == 0 || wid == 0) fail(path, "refusing to write empty PNG");
  std::vector<unsigned char> pix(static_cast<size_t>(hgt) * static_cast<size_t>(wid) * 3);
  size_t i = 0;
  for (int y = 0; y < hgt; ++y) {
    for (int x = 0; x < wid; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::fmin(std::fmax(display.channel(c)(y, x), 0.0f), 1.0f);
        pix[i++] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  write_png(path, wid, hgt, 3, pix);
}

void write_png_gray8(const std::string& path, const Planef& gray) {
  const int hgt = static_cast<int>(gray.rows()), wid = static_cast<int>(gray.cols());
  if (hgt == 0 || wid == 0) fail(path, "refusing to write empty PNG");
  std::vector<unsigned char> pix(static_cast<size_t>(hgt) * static_cast<size_t>(wid));
  size_t i = 0;
  for (int y = 0; y < hgt; ++y) {
    for (int x = 0; x < wid; ++x) {
      const float v = std::fmin(std::fmax(gray(y, x), 0.0f), 1.0f);
      pix[i++] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }
  write_png(path, wid, hgt, 1, pix);
}

Image3 read_png_rgb(const std::string& path) {
  const DecodedPng png = read_png(path);
  Image3 img(png.height, png.width);
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      const unsigned char* p =
          &png.pixels[(static_cast<size_t>(y) * static_cast<size_t>(png.width) + static_cast<size_t>(x)) *
                      static_cast<size_t>(png.channels)];
      float r, g, b;
      if (png.channels >= 3) {
        r = p[0] / 255.0f;
        g = p[1] / 255.0f;
        b = p[2] / 255.0f;
      } else {
        r = g = b = p[0] / 255.0f;
      }
      img.r(y, x) = r;
      img.g(y, x) = g;
      img.b(y, x) = b;
    }
  }
  return img;
}

Planef read_png_gray(const std::string& path) {
  const DecodedPng png = read_png(path);
  Planef out(png.height, png.width);
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      const unsigned char* p =
          &png.pixels[(static_cast<size_t>(y) * static_cast<size_t>(png.width) + static_cast<size_t>(x)) *
                      static_cast<size_t>(png.channels)];
      if (png.channels >= 3) {
        out(y, x) = (p[0] + p[1] + p[2]) / (3.0f * 255.0f);
      } else {
        out(y, x) = p[0] / 255.0f;
      }
    }
  }
  return out;
}

namespace {
bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace

Image3 load_linear_image(const std::string& path) {
  if (has_suffix(path, ".pfm") || has_suffix(path, ".PFM")) {
    if (pfm_channels(path) == 1) {
      const Planef gray = read_pfm_gray(path);
      Image3 img;
      img.r = gray;
      img.g = gray;
      img.b = gray;
      return img;
    }
    return read_pfm_rgb(path);
  }
  if (has_suffix(path, ".hdr") || has_suffix(path, ".HDR")) return read_hdr(path);
  if (has_suffix(path, ".png") || has_suffix(path, ".PNG")) return srgb_decode(read_png_rgb(path));
  throw std::runtime_error(path + ": unsupported image extension (want .pfm/.png/.hdr)");
}

void save_display_png(const std::string& path, const Image3& linear) {
  write_png_rgb8(path, to_display(linear));
}

}  // namespace shadeharm
