#include "tealeaf/cli.hpp"
#include "tealeaf/log.hpp"

int main(int argc, char** argv) {
  tealeaf::log::use_stderr();
  return tealeaf::dispatch(argc, argv);
}
