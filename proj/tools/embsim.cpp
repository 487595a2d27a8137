#include <string>
#include <vector>

#include "embsim/cli.hpp"

int main(int argc, char** argv) {
  return embsim::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
