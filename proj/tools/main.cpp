#include "modseg/cli.hpp"

int main(int argc, char** argv) { return modseg::run_cli(argc, argv); }
