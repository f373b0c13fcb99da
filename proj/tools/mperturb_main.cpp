#include "mperturb/lab.hpp"

int main(int argc, char** argv) { return mperturb::lab::run_cli(argc, argv); }
