#include "relight/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace relight {

namespace {

uint16_t quantize(double v, int maxval) {
  v = std::clamp(v, 0.0, 1.0);
  return uint16_t(std::lround(v * maxval));
}

int read_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments per the PNM grammar
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  in >> value;
  return value;
}

}  // namespace

void write_pnm(const std::string& path, const Image& img, int bit_depth) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::runtime_error("write_pnm: image must have 1 or 3 channels");
  if (bit_depth != 8 && bit_depth != 16)
    throw std::runtime_error("write_pnm: bit depth must be 8 or 16");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pnm: cannot open " + path);

  const int maxval = bit_depth == 8 ? 255 : 65535;
  out << (img.channels() == 3 ? "P6" : "P5") << "\n"
      << img.width() << " " << img.height() << "\n"
      << maxval << "\n";

  std::vector<uint8_t> row(size_t(img.width()) * img.channels() *
                           (bit_depth / 8));
  for (int y = 0; y < img.height(); ++y) {
    size_t k = 0;
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        uint16_t q = quantize(img.at(x, y, c), maxval);
        if (bit_depth == 16) row[k++] = uint8_t(q >> 8);  // big-endian per spec
        row[k++] = uint8_t(q & 0xff);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(k));
  }
  if (!out) throw std::runtime_error("write_pnm: write failed for " + path);
}

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pnm: cannot open " + path);

  std::string magic;
  in >> magic;
  int channels;
  if (magic == "P6")
    channels = 3;
  else if (magic == "P5")
    channels = 1;
  else
    throw std::runtime_error("read_pnm: unsupported magic '" + magic + "'");

  int w = read_pnm_token(in);
  int h = read_pnm_token(in);
  int maxval = read_pnm_token(in);
  if (w <= 0 || h <= 0 || (maxval != 255 && maxval != 65535))
    throw std::runtime_error("read_pnm: bad header in " + path);
  in.get();  // single whitespace after maxval

  const int bytes = maxval == 255 ? 1 : 2;
  std::vector<uint8_t> buf(size_t(w) * h * channels * bytes);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (!in) throw std::runtime_error("read_pnm: truncated file " + path);

  Image img(w, h, channels);
  size_t k = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        int v = buf[k++];
        if (bytes == 2) v = (v << 8) | buf[k++];
        img.at(x, y, c) = double(v) / maxval;
      }
  return img;
}

}  // namespace relight
