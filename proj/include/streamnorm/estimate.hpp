#pragma once

namespace streamnorm {

struct Estimate {
  double value = 0.0;
  bool breakdown = false;
  bool saturated = false;
};

}  // namespace streamnorm
