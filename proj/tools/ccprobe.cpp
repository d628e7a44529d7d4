#include <iostream>

#include "ccprobe/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ccprobe::pipeline::run(args, std::cout, std::cerr);
}
