#include "tfnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "tfnet/error.hpp"

namespace tfnet {

namespace {

struct GtRef {
  const Box* box;
  bool matched;
};

// Ranks detections of one class by descending score; ties keep input order.
std::vector<const Detection*> ranked(const std::vector<Detection>& detections, std::size_t class_id) {
  std::vector<const Detection*> out;
  for (const auto& d : detections)
    if (d.class_id == class_id) out.push_back(&d);
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection* a, const Detection* b) { return a->score > b->score; });
  return out;
}

const Detection* top_detection(const std::vector<const Detection*>& frame_dets) {
  const Detection* best = nullptr;
  for (const auto* d : frame_dets)
    if (best == nullptr || d->score > best->score) best = d;
  return best;
}

std::map<std::size_t, std::vector<const Detection*>> by_frame(const std::vector<Detection>& detections) {
  std::map<std::size_t, std::vector<const Detection*>> out;
  for (const auto& d : detections) out[d.frame_id].push_back(&d);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') {
    throw DataError("bad number '" + s + "' at line " + std::to_string(line));
  }
  return v;
}

std::size_t parse_index(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("bad index '" + s + "' at line " + std::to_string(line));
  }
  return v;
}

}  // namespace

std::optional<double> average_precision(const std::vector<Detection>& detections,
                                        const std::vector<GroundTruthFrame>& ground_truth,
                                        std::size_t class_id, double iou_threshold) {
  std::map<std::size_t, std::vector<GtRef>> gts;
  std::size_t num_gt = 0;
  for (const auto& f : ground_truth)
    for (const auto& g : f.boxes)
      if (g.class_id == class_id) {
        gts[f.frame_id].push_back({&g.box, false});
        ++num_gt;
      }
  const auto dets = ranked(detections, class_id);
  if (num_gt == 0) return dets.empty() ? std::nullopt : std::optional<double>(0.0);

  // (tp, fp) after each block of equally scored detections.
  std::vector<std::pair<std::size_t, std::size_t>> points;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const Detection& d = *dets[k];
    GtRef* best = nullptr;
    double best_iou = iou_threshold;
    if (auto it = gts.find(d.frame_id); it != gts.end()) {
      for (auto& g : it->second) {
        if (g.matched) continue;
        const double v = iou(d.box, *g.box);
        if (v >= best_iou && (best == nullptr || v > best_iou)) {
          best = &g;
          best_iou = v;
        }
      }
    }
    if (best != nullptr) {
      best->matched = true;
      ++tp;
    } else {
      ++fp;
    }
    if (k + 1 == dets.size() || dets[k + 1]->score != d.score) points.emplace_back(tp, fp);
  }

  // Envelope precision at each recall step r = k / num_gt.
  double area = 0.0;
  for (std::size_t k = 1; k <= num_gt; ++k) {
    double env = 0.0;
    for (const auto& [t, f] : points)
      if (t >= k) env = std::max(env, static_cast<double>(t) / static_cast<double>(t + f));
    area += env;
  }
  return area / static_cast<double>(num_gt);
}

std::size_t EvalReport::evaluated_classes() const {
  return static_cast<std::size_t>(
      std::count_if(per_class_ap.begin(), per_class_ap.end(), [](const auto& a) { return a.has_value(); }));
}

EvalReport frame_map(const std::vector<Detection>& detections,
                     const std::vector<GroundTruthFrame>& ground_truth, std::size_t num_classes,
                     double iou_threshold) {
  std::vector<bool> has_gt(num_classes, false);
  for (const auto& f : ground_truth)
    for (const auto& g : f.boxes) {
      if (g.class_id >= num_classes) throw DataError("GT class id " + std::to_string(g.class_id) + " out of range");
      has_gt[g.class_id] = true;
    }
  if (std::none_of(has_gt.begin(), has_gt.end(), [](bool b) { return b; })) {
    throw DataError("no class has ground truth; mAP is undefined");
  }
  EvalReport r;
  r.per_class_ap.resize(num_classes);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    r.per_class_ap[c] = average_precision(detections, ground_truth, c, iou_threshold);
    if (r.per_class_ap[c]) {
      total += *r.per_class_ap[c];
      ++n;
    }
  }
  r.map = total / static_cast<double>(n);
  r.cls_accuracy = classification_accuracy(detections, ground_truth);
  return r;
}

double classification_accuracy(const std::vector<Detection>& detections,
                               const std::vector<GroundTruthFrame>& ground_truth) {
  const auto frames = by_frame(detections);
  std::size_t total = 0, correct = 0;
  for (const auto& f : ground_truth) {
    if (f.boxes.empty()) continue;
    ++total;
    const auto it = frames.find(f.frame_id);
    if (it == frames.end()) continue;
    const Detection* top = top_detection(it->second);
    if (std::any_of(f.boxes.begin(), f.boxes.end(), [&](const GroundTruthBox& g) { return g.class_id == top->class_id; }))
      ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double localization_accuracy(const std::vector<Detection>& detections,
                             const std::vector<GroundTruthFrame>& ground_truth, double iou_threshold) {
  const auto frames = by_frame(detections);
  std::size_t total = 0, correct = 0;
  for (const auto& f : ground_truth) {
    if (f.boxes.empty()) continue;
    ++total;
    const auto it = frames.find(f.frame_id);
    if (it == frames.end()) continue;
    const Detection* top = top_detection(it->second);
    if (std::any_of(f.boxes.begin(), f.boxes.end(),
                    [&](const GroundTruthBox& g) { return iou(g.box, top->box) >= iou_threshold; }))
      ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void write_detections(std::ostream& out, const std::vector<Detection>& detections) {
  for (const auto& d : detections) {
    out << d.frame_id << ' ' << d.class_id << ' ' << format_exact(d.score) << ' ' << format_exact(d.box.x1)
        << ' ' << format_exact(d.box.y1) << ' ' << format_exact(d.box.x2) << ' ' << format_exact(d.box.y2) << '\n';
  }
}

std::vector<Detection> read_detections(std::istream& in) {
  std::vector<Detection> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ss(line);
    std::vector<std::string> f;
    for (std::string tok; ss >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    if (f.size() != 7) throw DataError("expected 7 fields at line " + std::to_string(n));
    Detection d;
    d.frame_id = parse_index(f[0], n);
    d.class_id = parse_index(f[1], n);
    d.score = parse_double(f[2], n);
    d.box = {parse_double(f[3], n), parse_double(f[4], n), parse_double(f[5], n), parse_double(f[6], n)};
    out.push_back(d);
  }
  return out;
}

std::string format_exact(double v) {
  char buf[64];
  for (int p = 3; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*f", p, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_ap_table(std::ostream& out, const EvalReport& report,
                    const std::vector<std::string>& class_names) {
  if (class_names.size() != report.per_class_ap.size()) {
    throw DataError("AP table needs one name per class");
  }
  out << "class_id name AP\n";
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const auto& name = class_names[c];
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw DataError("class name '" + name + "' is empty or contains whitespace");
    }
    out << c << ' ' << name << ' ' << (report.per_class_ap[c] ? format_exact(*report.per_class_ap[c]) : "-") << '\n';
  }
  out << "mAP " << format_exact(report.map) << '\n';
  out << "cls-accuracy " << format_exact(report.cls_accuracy) << '\n';
}

ApTable read_ap_table(std::istream& in) {
  ApTable t;
  std::string line;
  std::size_t n = 0;
  bool header = false, have_map = false, have_acc = false;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ss(line);
    std::vector<std::string> f;
    for (std::string tok; ss >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    if (!header) {
      if (f != std::vector<std::string>{"class_id", "name", "AP"}) throw DataError("missing AP table header at line " + std::to_string(n));
      header = true;
    } else if (f.size() == 2 && f[0] == "mAP") {
      t.report.map = parse_double(f[1], n);
      have_map = true;
    } else if (f.size() == 2 && f[0] == "cls-accuracy") {
      t.report.cls_accuracy = parse_double(f[1], n);
      have_acc = true;
    } else if (f.size() == 3) {
      if (parse_index(f[0], n) != t.class_names.size()) throw DataError("class ids out of order at line " + std::to_string(n));
      t.class_names.push_back(f[1]);
      t.report.per_class_ap.push_back(f[2] == "-" ? std::nullopt : std::optional<double>(parse_double(f[2], n)));
    } else {
      throw DataError("malformed AP table row at line " + std::to_string(n));
    }
  }
  if (!header || !have_map || !have_acc) throw DataError("incomplete AP table");
  return t;
}

}  // namespace tfnet
