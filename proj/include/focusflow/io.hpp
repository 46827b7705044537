#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "focusflow/flow.hpp"
#include "focusflow/model.hpp"
#include "focusflow/tensor.hpp"

namespace focusflow {

// ---- Middlebury .flo -------------------------------------------------------
// float32 magic 202021.25, int32 width, int32 height, then interleaved (u,v)
// float32 pairs in row-major order. Little-endian.
inline constexpr float kFloMagic = 202021.25f;

std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField decode_flo(std::span<const std::uint8_t> bytes);
void write_flo(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flo(const std::filesystem::path& path);

// ---- Binary PGM (P5) / PPM (P6), maxval 255 --------------------------------
// Images are [1,H,W] (PGM) or [3,H,W] (PPM) with intensities in [0,1];
// values are rounded to the nearest of 256 levels on write.
std::vector<std::uint8_t> encode_pnm(const Tensor& image);
Tensor decode_pnm(std::span<const std::uint8_t> bytes);
void write_pgm(const Tensor& image, const std::filesystem::path& path);
Tensor read_pgm(const std::filesystem::path& path);
void write_ppm(const Tensor& image, const std::filesystem::path& path);
Tensor read_ppm(const std::filesystem::path& path);

// ---- Checkpoints -------------------------------------------------------------
// Layout (little-endian):
//   char[8]  "FFLOWCKP"
//   u32      version (1)
//   u32      stage count S
//   i32[S]   widths
//   i32[S]   strides
//   u32      fusion kind, i32 corr radius, i32 refine convs, u32 use_cfe,
//   i32      image channels, i32 decoder width
//   u32      condition pattern, i32 condition diameter, f64 condition sigma
//   u64      parameter count N
//   f32[N]   parameters in FlowNet::parameters() order
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const FlowNet& net);
FlowNet decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const FlowNet& net, const std::filesystem::path& path);
FlowNet load_checkpoint(const std::filesystem::path& path);
// Loads and checks the stored layout against `expected`; throws FormatError
// naming the first differing stage.
FlowNet load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected);

// ---- Files -------------------------------------------------------------------
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace focusflow
