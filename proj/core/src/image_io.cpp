#include "oodf/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include "oodf/error.hpp"

namespace oodf {

namespace {

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw IoError("raw image: truncated header");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF),
                              static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

struct JpegContext {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  std::FILE* file = nullptr;
  Raster raster;
  ~JpegContext() {
    jpeg_destroy_decompress(&cinfo);
    if (file) std::fclose(file);
  }
};

// Decoding state lives behind a pointer that is never reassigned after
// setjmp, so the longjmp path only observes memory writes.
bool decode_jpeg(JpegContext* ctx, std::string& error) {
  ctx->cinfo.err = jpeg_std_error(&ctx->err.base);
  ctx->err.base.error_exit = jpeg_error_exit;
  if (setjmp(ctx->err.jump)) {
    error = ctx->err.message;
    return false;
  }
  jpeg_create_decompress(&ctx->cinfo);
  jpeg_stdio_src(&ctx->cinfo, ctx->file);
  jpeg_read_header(&ctx->cinfo, TRUE);
  if (ctx->cinfo.num_components != 3) {
    error = "not an RGB image (" + std::to_string(ctx->cinfo.num_components) + " components)";
    return false;
  }
  ctx->cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&ctx->cinfo);
  ctx->raster = Raster(ctx->cinfo.output_width, ctx->cinfo.output_height);
  while (ctx->cinfo.output_scanline < ctx->cinfo.output_height) {
    JSAMPROW row = ctx->raster.rgb.data() +
                   static_cast<std::size_t>(ctx->cinfo.output_scanline) * ctx->raster.width * 3;
    jpeg_read_scanlines(&ctx->cinfo, &row, 1);
  }
  jpeg_finish_decompress(&ctx->cinfo);
  return true;
}

}  // namespace

Raster read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("raw image: cannot open '" + path.string() + "'");
  Raster r;
  r.width = read_u32(in);
  r.height = read_u32(in);
  if (r.width == 0 || r.height == 0 || r.width > 1u << 15 || r.height > 1u << 15) {
    throw IoError("raw image: implausible size in '" + path.string() + "'");
  }
  r.rgb.resize(r.width * r.height * 3);
  in.read(reinterpret_cast<char*>(r.rgb.data()), static_cast<std::streamsize>(r.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.rgb.size())) {
    throw IoError("raw image: truncated pixel data in '" + path.string() + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError("raw image: trailing bytes in '" + path.string() + "'");
  }
  return r;
}

void write_raw(const std::filesystem::path& path, const Raster& raster) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("raw image: cannot write '" + path.string() + "'");
  write_u32(out, static_cast<std::uint32_t>(raster.width));
  write_u32(out, static_cast<std::uint32_t>(raster.height));
  out.write(reinterpret_cast<const char*>(raster.rgb.data()),
            static_cast<std::streamsize>(raster.rgb.size()));
}

Raster read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("png: " + path.string() + ": " + image.message);
  }
  if (!(image.format & PNG_FORMAT_FLAG_COLOR)) {
    png_image_free(&image);
    throw IoError("png: " + path.string() + ": not an RGB image");
  }
  image.format = PNG_FORMAT_RGB;
  Raster r(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, r.rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("png: " + path.string() + ": " + msg);
  }
  return r;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, raster.rgb.data(), 0, nullptr)) {
    throw IoError("png: cannot write '" + path.string() + "': " + image.message);
  }
}

Raster read_jpeg(const std::filesystem::path& path) {
  auto ctx = std::make_unique<JpegContext>();
  ctx->file = std::fopen(path.c_str(), "rb");
  if (!ctx->file) throw IoError("jpeg: cannot open '" + path.string() + "'");
  std::string error;
  if (!decode_jpeg(ctx.get(), error)) throw IoError("jpeg: " + path.string() + ": " + error);
  return std::move(ctx->raster);
}

Raster read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return read_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
  if (ext == ".raw") return read_raw(path);
  throw IoError("unsupported image format '" + ext + "'");
}

Tensor preprocess(const Raster& raster, std::size_t side) {
  if (raster.width == 0 || raster.height == 0 ||
      raster.rgb.size() != raster.width * raster.height * 3) {
    throw IoError("preprocess: corrupt raster");
  }
  if (side == 0) throw ValueError("preprocess: output side must be positive");
  Tensor out({3, side, side});
  const double sx = static_cast<double>(raster.width) / static_cast<double>(side);
  const double sy = static_cast<double>(raster.height) / static_cast<double>(side);
  const auto clamp_index = [](double v, std::size_t limit) {
    return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(limit - 1)));
  };
  for (std::size_t oy = 0; oy < side; ++oy) {
    const double fy = std::max(0.0, (static_cast<double>(oy) + 0.5) * sy - 0.5);
    const std::size_t y0 = clamp_index(std::floor(fy), raster.height);
    const std::size_t y1 = std::min(y0 + 1, raster.height - 1);
    const double wy = std::min(fy - static_cast<double>(y0), 1.0);
    for (std::size_t ox = 0; ox < side; ++ox) {
      const double fx = std::max(0.0, (static_cast<double>(ox) + 0.5) * sx - 0.5);
      const std::size_t x0 = clamp_index(std::floor(fx), raster.width);
      const std::size_t x1 = std::min(x0 + 1, raster.width - 1);
      const double wx = std::min(fx - static_cast<double>(x0), 1.0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * raster.at(x0, y0, c) + wx * raster.at(x1, y0, c);
        const double bottom = (1.0 - wx) * raster.at(x0, y1, c) + wx * raster.at(x1, y1, c);
        const double v = (1.0 - wy) * top + wy * bottom;
        out[(c * side + oy) * side + ox] = (v / 255.0 - 0.5) / 0.5;
      }
    }
  }
  return out;
}

double to_intensity(double normalized) noexcept { return (normalized * 0.5 + 0.5) * 255.0; }

}  // namespace oodf
