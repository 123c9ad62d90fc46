#include "vxs/cli/run.hpp"

int main(int argc, char** argv) { return vxs::cli::run(argc, argv); }
