#include "tfnet/box.hpp"

#include <algorithm>

namespace tfnet {

double iou(const Box& a, const Box& b) {
  const double aa = a.area(), ab = b.area();
  if (aa <= 0.0 || ab <= 0.0) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (aa + ab - inter);
}

}  // namespace tfnet
