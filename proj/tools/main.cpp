#include "tflc/app/cli.hpp"

int main(int argc, char** argv) { return tflc::app::run_cli(argc, argv); }
