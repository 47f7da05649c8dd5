#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "sentinel/log.hpp"

int main(int argc, char** argv) {
  sentinel::log::set_level(sentinel::log::Level::Warn);
  sentinel::log::init_from_env();
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
