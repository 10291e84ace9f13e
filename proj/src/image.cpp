#include "gazedet/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gazedet {

namespace {

uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<size_t>(x) * 3 + c] = to_byte(img.at(x, y, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write_ppm: write failed for " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path.string());
  auto next_int = [&in, &path]() {
    // skip whitespace and '#' comments
    int ch;
    while ((ch = in.peek()) != EOF) {
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    int v;
    if (!(in >> v)) throw std::runtime_error("read_ppm: malformed header in " + path.string());
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw std::runtime_error("read_ppm: unsupported maxval");
  in.get();  // single whitespace after maxval
  Image img(w, h);
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error("read_ppm: truncated pixel data in " + path.string());
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
  }
  return img;
}

namespace {

uint32_t crc32_update(uint32_t crc, const uint8_t* data, size_t len) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t n = 0; n < 256; ++n) {
      uint32_t c = n;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[n] = c;
    }
    init = true;
  }
  crc ^= 0xffffffffu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

uint32_t adler32(const uint8_t* data, size_t len) {
  uint32_t a = 1, b = 0;
  for (size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void push_u32_be(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> head;
  push_u32_be(head, static_cast<uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  if (!payload.empty())
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
  uint32_t crc = crc32_update(0, reinterpret_cast<const uint8_t*>(type), 4);
  crc = crc32_update(crc, payload.data(), payload.size());
  std::vector<uint8_t> tail;
  push_u32_be(tail, crc);
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_png: cannot open " + path.string());
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  push_u32_be(ihdr, static_cast<uint32_t>(img.width));
  push_u32_be(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(out, "IHDR", ihdr);

  // raw scanlines, filter byte 0 per row
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height) * (1 + static_cast<size_t>(img.width) * 3));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) raw.push_back(to_byte(img.at(x, y, c)));
  }

  // zlib stream with stored (uncompressed) deflate blocks
  std::vector<uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  size_t off = 0;
  while (off < raw.size() || raw.empty()) {
    const size_t block = std::min<size_t>(65535, raw.size() - off);
    const bool final = off + block == raw.size();
    idat.push_back(final ? 1 : 0);
    idat.push_back(static_cast<uint8_t>(block & 0xff));
    idat.push_back(static_cast<uint8_t>(block >> 8));
    idat.push_back(static_cast<uint8_t>(~block & 0xff));
    idat.push_back(static_cast<uint8_t>((~block >> 8) & 0xff));
    idat.insert(idat.end(), raw.begin() + static_cast<std::ptrdiff_t>(off),
                raw.begin() + static_cast<std::ptrdiff_t>(off + block));
    off += block;
    if (final) break;
  }
  push_u32_be(idat, adler32(raw.data(), raw.size()));
  write_chunk(out, "IDAT", idat);
  write_chunk(out, "IEND", {});
  if (!out) throw std::runtime_error("write_png: write failed for " + path.string());
}

std::array<double, 3> jet_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ramp = [](double x) { return std::clamp(x, 0.0, 1.0); };
  return {ramp(std::min(4.0 * v - 1.5, -4.0 * v + 4.5)),
          ramp(std::min(4.0 * v - 0.5, -4.0 * v + 3.5)),
          ramp(std::min(4.0 * v + 0.5, -4.0 * v + 2.5))};
}

std::array<double, 3> sample_bilinear(const Image& img, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = cx - x0, fy = cy - y0;
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double top = img.at(x0, y0, c) * (1 - fx) + img.at(x1, y0, c) * fx;
    const double bot = img.at(x0, y1, c) * (1 - fx) + img.at(x1, y1, c) * fx;
    out[c] = top * (1 - fy) + bot * fy;
  }
  return out;
}

}  // namespace gazedet
