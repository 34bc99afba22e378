#include "handshake/skeleton.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>

#include "handshake/error.hpp"

namespace handshake::skeleton {

namespace {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  /// Next non-blank line split into tokens; nullopt at end of input.
  std::optional<std::vector<std::string_view>> next() {
    while (pos_ < text_.size()) {
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      auto tokens = split(line);
      if (!tokens.empty()) return tokens;
    }
    return std::nullopt;
  }

  std::vector<std::string_view> expect(std::string_view what) {
    auto tokens = next();
    if (!tokens) throw ParseError(line_ + 1, "unexpected end of file, expected " + std::string(what));
    return *tokens;
  }

  std::size_t line() const { return line_; }

 private:
  static std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

double parse_double(std::string_view token, std::size_t line) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line, "non-numeric field '" + std::string(token) + "'");
  }
  return value;
}

long long parse_integer(std::string_view token, std::size_t line) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(line, "expected an integer, got '" + std::string(token) + "'");
  }
  return value;
}

std::size_t parse_count(const std::vector<std::string_view>& tokens, std::size_t line,
                        std::string_view what) {
  if (tokens.size() != 1) throw ParseError(line, "malformed " + std::string(what) + " line");
  long long v = parse_integer(tokens[0], line);
  if (v < 0) throw ParseError(line, "negative " + std::string(what));
  return static_cast<std::size_t>(v);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string join(const std::vector<std::string_view>& tokens, std::size_t from) {
  std::string out;
  for (std::size_t i = from; i < tokens.size(); ++i) {
    if (i > from) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Least-squares slope (units per frame) of the finite samples in [lo, hi].
Vec3 fitted_slope(const SkeletonSequence& seq, std::size_t slot, std::size_t lo, std::size_t hi) {
  double n = 0.0;
  double mean_t = 0.0;
  Vec3 mean_p = Vec3::Zero();
  for (std::size_t t = lo; t <= hi; ++t) {
    const Vec3& p = seq.frames[t].joints[slot];
    if (!p.allFinite()) continue;
    n += 1.0;
    mean_t += static_cast<double>(t);
    mean_p += p;
  }
  if (n < 2.0) return Vec3::Zero();
  mean_t /= n;
  mean_p /= n;
  double sxx = 0.0;
  Vec3 sxy = Vec3::Zero();
  for (std::size_t t = lo; t <= hi; ++t) {
    const Vec3& p = seq.frames[t].joints[slot];
    if (!p.allFinite()) continue;
    const double dt = static_cast<double>(t) - mean_t;
    sxx += dt * dt;
    sxy += dt * (p - mean_p);
  }
  return sxy / sxx;
}

std::optional<std::size_t> first_contact(const SkeletonSequence& a, const SkeletonSequence& b,
                                         UpperJoint joint, double threshold) {
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double d = (a.frames[t][joint] - b.frames[t][joint]).norm();
    if (std::isfinite(d) && d <= threshold) return t;
  }
  return std::nullopt;
}

SkeletonSequence slice(const SkeletonSequence& seq, std::size_t first, std::size_t last) {
  SkeletonSequence out;
  out.frame_rate = seq.frame_rate;
  out.source_label = seq.source_label;
  out.frames.assign(seq.frames.begin() + static_cast<std::ptrdiff_t>(first),
                    seq.frames.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  return out;
}

}  // namespace

bool UpperBodyFrame::all_finite() const {
  return std::all_of(joints.begin(), joints.end(), [](const Vec3& p) { return p.allFinite(); });
}

std::vector<RawSkeletonSequence> parse_skeleton_file(std::string_view content,
                                                     std::string_view source_label) {
  if (content.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw EmptyInputError("empty skeleton file");
  }
  LineReader reader(content);
  const std::size_t frame_count = parse_count(reader.expect("frame count"), reader.line(), "frame count");

  std::vector<RawSkeletonSequence> bodies;
  std::map<std::string, std::size_t, std::less<>> index_of;

  for (std::size_t f = 0; f < frame_count; ++f) {
    const std::size_t body_count = parse_count(reader.expect("body count"), reader.line(), "body count");
    for (std::size_t b = 0; b < body_count; ++b) {
      auto info = reader.expect("body line");
      if (info.size() != 10) {
        throw ParseError(reader.line(), "body line must have 10 fields, got " + std::to_string(info.size()));
      }
      RawSkeletonFrame frame;
      frame.frame_index = f;
      frame.body_info = join(info, 1);
      for (std::size_t i = 1; i < info.size(); ++i) parse_double(info[i], reader.line());

      const std::size_t joint_count = parse_count(reader.expect("joint count"), reader.line(), "joint count");
      if (joint_count != kKinectJointCount) {
        throw ParseError(reader.line(), "frame " + std::to_string(f) + ": joint count " +
                                            std::to_string(joint_count) + ", expected 25");
      }
      for (std::size_t j = 0; j < kKinectJointCount; ++j) {
        auto fields = reader.expect("joint line");
        if (fields.size() != 12) {
          throw ParseError(reader.line(), "frame " + std::to_string(f) + ": joint line must have 12 fields, got " +
                                              std::to_string(fields.size()));
        }
        std::array<double, 12> values{};
        for (std::size_t k = 0; k < 12; ++k) values[k] = parse_double(fields[k], reader.line());
        RawJoint& joint = frame.joints[j];
        joint.position = Vec3(values[0], values[1], values[2]);
        if (!joint.position.allFinite()) {
          throw ParseError(reader.line(), "non-finite joint position");
        }
        const double state = values[11];
        if (state != 0.0 && state != 1.0 && state != 2.0) {
          throw ParseError(reader.line(), "tracking state must be 0, 1 or 2");
        }
        joint.tracking_state = static_cast<TrackingState>(static_cast<int>(state));
      }

      const std::string id(info[0]);
      auto it = index_of.find(id);
      if (it == index_of.end()) {
        it = index_of.emplace(id, bodies.size()).first;
        RawSkeletonSequence seq;
        seq.body_id = id;
        seq.source_label = std::string(source_label);
        bodies.push_back(std::move(seq));
      }
      auto& frames = bodies[it->second].frames;
      if (!frames.empty() && frames.back().frame_index == f) {
        throw ParseError(reader.line(), "body " + id + " appears twice in frame " + std::to_string(f));
      }
      frames.push_back(std::move(frame));
    }
  }
  if (reader.next()) throw ParseError(reader.line(), "trailing content after last frame");
  return bodies;
}

std::string serialize_skeleton_file(std::span<const RawSkeletonSequence> bodies) {
  std::size_t frame_count = 0;
  for (const auto& body : bodies) {
    for (const auto& frame : body.frames) frame_count = std::max(frame_count, frame.frame_index + 1);
  }
  // (frame, body) pairs in frame order, keeping body order within a frame
  std::vector<std::vector<std::pair<const RawSkeletonSequence*, const RawSkeletonFrame*>>> per_frame(frame_count);
  for (const auto& body : bodies) {
    for (const auto& frame : body.frames) per_frame[frame.frame_index].emplace_back(&body, &frame);
  }

  std::string out = std::to_string(frame_count) + "\n";
  for (const auto& entries : per_frame) {
    out += std::to_string(entries.size()) + "\n";
    for (const auto& [body, frame] : entries) {
      out += body->body_id;
      out += ' ';
      out += frame->body_info.empty() ? "0 0 0 0 0 0 0 0 0" : frame->body_info;
      out += "\n25\n";
      for (const auto& joint : frame->joints) {
        out += format_double(joint.position.x()) + ' ' + format_double(joint.position.y()) + ' ' +
               format_double(joint.position.z());
        out += " 0 0 0 0 0 0 0 0 ";
        out += std::to_string(static_cast<int>(joint.tracking_state));
        out += '\n';
      }
    }
  }
  return out;
}

UpperBodyFrame select_upper_body(const RawSkeletonFrame& frame) {
  UpperBodyFrame out;
  for (std::size_t slot = 0; slot < kUpperBodyJointCount; ++slot) {
    out.joints[slot] = frame.joints[kUpperBodyMap[slot]].position;
  }
  return out;
}

SkeletonSequence select_upper_body(const RawSkeletonSequence& seq) {
  SkeletonSequence out;
  out.frame_rate = seq.frame_rate;
  out.source_label = seq.source_label.empty() ? seq.body_id : seq.source_label + "#" + seq.body_id;
  out.frames.reserve(seq.frames.size());
  for (const auto& frame : seq.frames) out.frames.push_back(select_upper_body(frame));
  return out;
}

std::optional<std::pair<RawSkeletonSequence, RawSkeletonSequence>> pair_bodies(
    std::span<const RawSkeletonSequence> bodies) {
  if (bodies.size() < 2) return std::nullopt;
  std::vector<std::size_t> order(bodies.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bodies[a].frames.size() > bodies[b].frames.size();
  });
  std::size_t a = std::min(order[0], order[1]);
  std::size_t b = std::max(order[0], order[1]);

  RawSkeletonSequence first = bodies[a];
  RawSkeletonSequence second = bodies[b];
  first.frames.clear();
  second.frames.clear();
  std::size_t i = 0;
  std::size_t j = 0;
  const auto& fa = bodies[a].frames;
  const auto& fb = bodies[b].frames;
  while (i < fa.size() && j < fb.size()) {
    if (fa[i].frame_index < fb[j].frame_index) {
      ++i;
    } else if (fb[j].frame_index < fa[i].frame_index) {
      ++j;
    } else {
      first.frames.push_back(fa[i++]);
      second.frames.push_back(fb[j++]);
    }
  }
  if (first.frames.empty()) return std::nullopt;
  return std::make_pair(std::move(first), std::move(second));
}

void SegmentationConfig::validate() const {
  if (!(start_velocity_threshold > 0.0) || !(grasp_distance_threshold > 0.0) ||
      !(discontinuity_threshold > 0.0) || min_length == 0 || speed_window == 0 || sustain_frames == 0) {
    throw ContractError("segmentation thresholds must be positive");
  }
}

std::string_view to_string(RejectionReason reason) {
  switch (reason) {
    case RejectionReason::NoMovement: return "no movement";
    case RejectionReason::NoGrasp: return "no grasp";
    case RejectionReason::LeftHand: return "left-hand";
    case RejectionReason::TooShort: return "too short";
    case RejectionReason::TrackingGap: return "tracking gap";
  }
  return "unknown";
}

std::vector<double> joint_speed(const SkeletonSequence& seq, UpperJoint joint, std::size_t window) {
  const std::size_t n = seq.size();
  const auto slot = static_cast<std::size_t>(joint);
  std::vector<double> speed(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= window ? t - window : 0;
    const std::size_t hi = std::min(n - 1, t + window);
    const double back = fitted_slope(seq, slot, lo, t).norm();
    const double ahead = fitted_slope(seq, slot, t, hi).norm();
    speed[t] = std::min(back, ahead) * seq.frame_rate;
  }
  return speed;
}

SegmentResult segment_reach_phase(const SkeletonSequence& first, const SkeletonSequence& second,
                                  const SegmentationConfig& cfg) {
  cfg.validate();
  if (first.size() != second.size()) throw ContractError("sequences differ in length");
  if (first.frame_rate != second.frame_rate) throw ContractError("sequences differ in frame rate");
  if (first.empty()) return Rejection{RejectionReason::NoMovement, "empty recording"};

  const auto right = first_contact(first, second, UpperJoint::HandRight, cfg.grasp_distance_threshold);
  const auto left = first_contact(first, second, UpperJoint::HandLeft, cfg.grasp_distance_threshold);

  const auto speed_a = joint_speed(first, UpperJoint::HandRight, cfg.speed_window);
  const auto speed_b = joint_speed(second, UpperJoint::HandRight, cfg.speed_window);
  const std::size_t search_end = right ? *right : first.size() - 1;
  std::optional<std::size_t> start;
  std::size_t run = 0;
  for (std::size_t t = 0; t <= search_end; ++t) {
    run = std::max(speed_a[t], speed_b[t]) > cfg.start_velocity_threshold ? run + 1 : 0;
    if (run > 0 && (run == cfg.sustain_frames || t == search_end)) {
      start = t + 1 - run;
      break;
    }
  }

  if (!right && !left && !start) return Rejection{RejectionReason::NoMovement, "hands never move"};
  if (left && (!right || *left < *right)) {
    return Rejection{RejectionReason::LeftHand,
                     "left hands meet at frame " + std::to_string(*left)};
  }
  if (!right) return Rejection{RejectionReason::NoGrasp, "right hands never come within grasp distance"};
  if (!start) return Rejection{RejectionReason::NoMovement, "no right-hand motion before the grasp"};

  const SegmentBounds bounds{*start, *right};
  if (bounds.length() < cfg.min_length) {
    return Rejection{RejectionReason::TooShort,
                     "segment of " + std::to_string(bounds.length()) + " frames"};
  }

  std::vector<bool> defective(first.size(), false);
  for (const auto* seq : {&first, &second}) {
    for (const auto& d : validate_sequence(*seq, cfg.discontinuity_threshold)) defective[d.frame] = true;
  }
  std::size_t gap = 0;
  for (std::size_t t = bounds.start; t <= bounds.grasp; ++t) {
    gap = defective[t] ? gap + 1 : 0;
    if (gap > cfg.max_gap) {
      return Rejection{RejectionReason::TrackingGap,
                       "defective run ending at frame " + std::to_string(t)};
    }
  }

  return ReachSegment{bounds, slice(first, bounds.start, bounds.grasp),
                      slice(second, bounds.start, bounds.grasp)};
}

std::vector<Defect> validate_sequence(const SkeletonSequence& seq, double discontinuity_threshold) {
  std::vector<Defect> defects;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& frame = seq.frames[t];
    if (!frame.all_finite()) {
      std::size_t joint = 0;
      while (joint < kUpperBodyJointCount && frame.joints[joint].allFinite()) ++joint;
      defects.push_back({t, DefectKind::NonFinite, joint, std::numeric_limits<double>::quiet_NaN()});
      continue;
    }
    if (t == 0 || !seq.frames[t - 1].all_finite()) continue;
    double worst = 0.0;
    std::size_t worst_joint = 0;
    for (std::size_t j = 0; j < kUpperBodyJointCount; ++j) {
      const double jump = (frame.joints[j] - seq.frames[t - 1].joints[j]).norm();
      if (jump > worst) {
        worst = jump;
        worst_joint = j;
      }
    }
    if (worst > discontinuity_threshold) {
      defects.push_back({t, DefectKind::Discontinuity, worst_joint, worst});
    }
  }
  return defects;
}

}  // namespace handshake::skeleton
