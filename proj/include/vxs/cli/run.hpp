#pragma once

#include <cstdio>

namespace vxs::cli {

inline int run(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::fprintf(stderr, "error: category=config message=cli not wired yet\n");
  return 2;
}

}  // namespace vxs::cli
