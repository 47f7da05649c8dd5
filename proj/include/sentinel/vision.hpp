#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sentinel/bytes.hpp"

namespace sentinel::vision {

/// Row-major 8-bit grayscale image.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  std::uint64_t frame_index = 0;
  std::uint64_t timestamp_ms = 0;

  Frame() = default;
  Frame(int w, int h, std::uint8_t fill = 0, std::uint64_t index = 0, std::uint64_t ts = 0);

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }

  bool operator==(const Frame&) const = default;
};

/// Throws std::invalid_argument unless width, height > 0 and the pixel buffer matches.
void validate(const Frame& frame);

struct BackgroundModel {
  int width = 0;
  int height = 0;
  std::vector<double> mean;
  std::uint64_t frames_seen = 0;

  bool operator==(const BackgroundModel&) const = default;
};

struct DetectorConfig {
  int pixel_threshold = 25;
  double area_fraction = 0.01;
  double learning_rate = 0.05;
  int warmup_frames = 5;
  int pre_roll = 10;
  int post_roll = 10;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;
  bool operator==(const BoundingBox&) const = default;
};

struct MotionEvent {
  std::uint64_t frame_index = 0;
  double changed_fraction = 0.0;
  BoundingBox bbox;
  bool operator==(const MotionEvent&) const = default;
};

struct Clip {
  std::vector<Frame> frames;
  MotionEvent event;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

BackgroundModel init_background(const Frame& frame);

struct Detection {
  std::optional<MotionEvent> event;
  BackgroundModel model;
};

/// Background subtraction against the rounded running mean, followed by the
/// running-average update. Pure.
Detection detect(const BackgroundModel& model, const Frame& frame, const DetectorConfig& cfg);

/// Keeps the last `pre_roll` frames and assembles clips around triggers.
///
/// Call `trigger` with the event for a frame before pushing that frame. The
/// clip then collects the pre-roll snapshot, the trigger frame, and the next
/// `post_roll` frames; `push` returns it once complete. Triggers arriving while
/// a clip is still collecting are folded into it.
class ClipBuffer {
 public:
  ClipBuffer(std::size_t pre_roll, std::size_t post_roll);

  /// Returns false when the trigger was folded into an open clip.
  bool trigger(const MotionEvent& event);
  std::optional<Clip> push(Frame frame);
  /// Closes an open clip early (e.g. when detection stops).
  std::optional<Clip> finish();

  bool collecting() const { return open_.has_value(); }
  std::size_t size() const { return ring_.size(); }
  const std::deque<Frame>& ring() const { return ring_; }

 private:
  struct Pending {
    Clip clip;
    std::size_t remaining_post = 0;
    bool trigger_seen = false;
  };

  std::size_t pre_roll_;
  std::size_t post_roll_;
  std::deque<Frame> ring_;
  std::optional<Pending> open_;
};

/// SVC1 clip container.
Bytes encode_clip(const std::vector<Frame>& frames);
std::vector<Frame> decode_clip(ByteView data);

}  // namespace sentinel::vision
