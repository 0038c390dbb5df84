#define DOCTEST_CONFIG_IMPLEMENT
#include <spdlog/spdlog.h>

#include "doctest.h"

int main(int argc, char** argv) {
  // Stages log warnings on purpose for degenerate inputs; keep test output readable.
  spdlog::set_level(spdlog::level::err);
  return doctest::Context(argc, argv).run();
}
