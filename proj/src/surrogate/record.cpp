#include "ces/record.hpp"

namespace ces {

std::string to_string(Source s) {
  switch (s) {
    case Source::hmc: return "hmc";
    case Source::dagger: return "dagger";
    case Source::rejected_hmc: return "rejected-hmc";
  }
  return "unknown";
}

}  // namespace ces
