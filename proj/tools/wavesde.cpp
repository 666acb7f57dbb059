#include <wavesde/cli.hpp>

int main(int argc, char** argv) {
  return wavesde::run_cli(std::vector<std::string>(argv, argv + argc));
}
