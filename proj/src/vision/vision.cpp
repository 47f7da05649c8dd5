#include "sentinel/vision.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

namespace sentinel::vision {

Frame::Frame(int w, int h, std::uint8_t fill, std::uint64_t index, std::uint64_t ts)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill),
      frame_index(index), timestamp_ms(ts) {}

void validate(const Frame& frame) {
  if (frame.width <= 0 || frame.height <= 0) throw std::invalid_argument("frame dimensions must be positive");
  if (frame.pixels.size() != static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height)) {
    throw std::invalid_argument("frame pixel count does not match dimensions");
  }
}

void DetectorConfig::validate() const {
  if (pixel_threshold < 0 || pixel_threshold > 255) throw std::invalid_argument("pixel_threshold must be in [0,255]");
  if (!(area_fraction > 0.0 && area_fraction <= 1.0)) throw std::invalid_argument("area_fraction must be in (0,1]");
  if (!(learning_rate >= 0.0 && learning_rate <= 1.0)) throw std::invalid_argument("learning_rate must be in [0,1]");
  if (warmup_frames < 0) throw std::invalid_argument("warmup_frames must be non-negative");
  if (pre_roll < 0 || post_roll < 0) throw std::invalid_argument("pre_roll/post_roll must be non-negative");
}

BackgroundModel init_background(const Frame& frame) {
  validate(frame);
  BackgroundModel model;
  model.width = frame.width;
  model.height = frame.height;
  model.mean.assign(frame.pixels.begin(), frame.pixels.end());
  model.frames_seen = 1;
  return model;
}

Detection detect(const BackgroundModel& model, const Frame& frame, const DetectorConfig& cfg) {
  validate(frame);
  if (frame.width != model.width || frame.height != model.height) {
    throw DimensionMismatch("frame " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                            " does not match background " + std::to_string(model.width) + "x" +
                            std::to_string(model.height));
  }

  std::size_t changed = 0;
  BoundingBox box{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), -1, -1};
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const auto idx = static_cast<std::size_t>(y) * frame.width + x;
      const int background = static_cast<int>(std::lround(model.mean[idx]));
      if (std::abs(static_cast<int>(frame.pixels[idx]) - background) > cfg.pixel_threshold) {
        ++changed;
        box.x_min = std::min(box.x_min, x);
        box.y_min = std::min(box.y_min, y);
        box.x_max = std::max(box.x_max, x);
        box.y_max = std::max(box.y_max, y);
      }
    }
  }

  Detection out;
  const double fraction = static_cast<double>(changed) / static_cast<double>(frame.pixels.size());
  if (model.frames_seen > static_cast<std::uint64_t>(cfg.warmup_frames) && fraction > cfg.area_fraction) {
    out.event = MotionEvent{frame.frame_index, fraction, box};
  }

  out.model = model;
  const double alpha = cfg.learning_rate;
  for (std::size_t i = 0; i < out.model.mean.size(); ++i) {
    out.model.mean[i] = (1.0 - alpha) * out.model.mean[i] + alpha * frame.pixels[i];
  }
  out.model.frames_seen += 1;
  return out;
}

ClipBuffer::ClipBuffer(std::size_t pre_roll, std::size_t post_roll) : pre_roll_(pre_roll), post_roll_(post_roll) {}

bool ClipBuffer::trigger(const MotionEvent& event) {
  if (open_) return false;
  Pending pending;
  pending.clip.event = event;
  pending.clip.frames.assign(ring_.begin(), ring_.end());
  pending.remaining_post = post_roll_;
  open_ = std::move(pending);
  return true;
}

std::optional<Clip> ClipBuffer::push(Frame frame) {
  std::optional<Clip> done;
  if (open_) {
    open_->clip.frames.push_back(frame);
    if (!open_->trigger_seen) {
      open_->trigger_seen = true;
    } else {
      --open_->remaining_post;
    }
    if (open_->remaining_post == 0) {
      done = std::move(open_->clip);
      open_.reset();
    }
  }
  if (pre_roll_ > 0) {
    ring_.push_back(std::move(frame));
    while (ring_.size() > pre_roll_) ring_.pop_front();
  }
  return done;
}

std::optional<Clip> ClipBuffer::finish() {
  if (!open_) return std::nullopt;
  std::optional<Clip> done = std::move(open_->clip);
  open_.reset();
  if (done->frames.empty()) return std::nullopt;
  return done;
}

namespace {
constexpr std::uint8_t kMagic[4] = {'S', 'V', 'C', '1'};
}

Bytes encode_clip(const std::vector<Frame>& frames) {
  if (frames.empty()) throw std::invalid_argument("clip has no frames");
  const auto& first = frames.front();
  if (first.width <= 0 || first.height <= 0 || first.width > 0xffff || first.height > 0xffff) {
    throw std::invalid_argument("clip dimensions out of range");
  }
  Bytes out;
  out.reserve(20 + frames.size() * (8 + first.pixels.size()));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u16(out, static_cast<std::uint16_t>(first.width));
  put_u16(out, static_cast<std::uint16_t>(first.height));
  put_u32(out, static_cast<std::uint32_t>(frames.size()));
  put_u64(out, first.frame_index);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    validate(f);
    if (f.width != first.width || f.height != first.height) throw std::invalid_argument("clip frames differ in size");
    if (f.frame_index != first.frame_index + i) throw std::invalid_argument("clip frame indices not contiguous");
    put_u64(out, f.timestamp_ms);
    put_bytes(out, f.pixels);
  }
  return out;
}

std::vector<Frame> decode_clip(ByteView data) {
  Reader in(data);
  auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw DecodeError("not an SVC1 container");
  const int width = in.u16();
  const int height = in.u16();
  const std::uint32_t count = in.u32();
  const std::uint64_t first_index = in.u64();
  if (width == 0 || height == 0) throw DecodeError("SVC1 dimensions must be positive");
  const std::size_t frame_bytes = static_cast<std::size_t>(width) * height;
  if (in.remaining() != static_cast<std::size_t>(count) * (8 + frame_bytes)) {
    throw DecodeError("SVC1 body length does not match header");
  }
  std::vector<Frame> frames;
  frames.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Frame f;
    f.width = width;
    f.height = height;
    f.frame_index = first_index + i;
    f.timestamp_ms = in.u64();
    auto px = in.take(frame_bytes);
    f.pixels.assign(px.begin(), px.end());
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace sentinel::vision
