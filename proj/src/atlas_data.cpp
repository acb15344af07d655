#include "dpmn/priors.hpp"

namespace dpmn::priors {

// Canonical 5x7 atlas; data/glyph_atlas.txt holds the same table.
const char* kBuiltinAtlasText =
    "A 01110100011000111111100011000110001\n"
    "B 11110100011000111110100011000111110\n"
    "C 01110100011000010000100001000101110\n"
    "D 11100100101000110001100011001011100\n"
    "E 11111100001000011110100001000011111\n"
    "F 11111100001000011110100001000010000\n"
    "G 01110100011000010111100011000101111\n"
    "H 10001100011000111111100011000110001\n"
    "I 01110001000010000100001000010001110\n"
    "J 00111000100001000010000101001001100\n"
    "K 10001100101010011000101001001010001\n"
    "L 10000100001000010000100001000011111\n"
    "M 10001110111010110101100011000110001\n"
    "N 10001100011100110101100111000110001\n"
    "O 01110100011000110001100011000101110\n"
    "P 11110100011000111110100001000010000\n"
    "Q 01110100011000110001101011001001101\n"
    "R 11110100011000111110101001001010001\n"
    "S 01111100001000001110000010000111110\n"
    "T 11111001000010000100001000010000100\n"
    "U 10001100011000110001100011000101110\n"
    "V 10001100011000110001100010101000100\n"
    "W 10001100011000110101101011010101010\n"
    "X 10001100010101000100010101000110001\n"
    "Y 10001100010101000100001000010000100\n"
    "Z 11111000010001000100010001000011111\n"
    "a 00000000000111000001011111000101111\n"
    "b 10000100001011011001100011000111110\n"
    "c 00000000000111010000100001000101110\n"
    "d 00001000010110110011100011000101111\n"
    "e 00000000000111010001111111000001110\n"
    "f 00110010010100011100010000100001000\n"
    "g 00000011111000110001011110000101110\n"
    "h 10000100001011011001100011000110001\n"
    "i 00100000000110000100001000010001110\n"
    "j 00010000000011000010000101001001100\n"
    "k 10000100001001010100110001010010010\n"
    "l 01100001000010000100001000010001110\n"
    "m 00000000001101010101101011010110101\n"
    "n 00000000001011011001100011000110001\n"
    "o 00000000000111010001100011000101110\n"
    "p 00000000001111010001111101000010000\n"
    "q 00000000000110110011011110000100001\n"
    "r 00000000001011011001100001000010000\n"
    "s 00000000000111010000011100000111110\n"
    "t 01000010001110001000010000100100110\n"
    "u 00000000001000110001100011001101101\n"
    "v 00000000001000110001100010101000100\n"
    "w 00000000001000110001101011010101010\n"
    "x 00000000001000101010001000101010001\n"
    "y 00000000001000110001011110000101110\n"
    "z 00000000001111100010001000100011111\n"
    "0 01110100011001110101110011000101110\n"
    "1 00100011000010000100001000010001110\n"
    "2 01110100010000100010001000100011111\n"
    "3 11111000100010000010000011000101110\n"
    "4 00010001100101010010111110001000010\n"
    "5 11111100001111000001000011000101110\n"
    "6 00110010001000011110100011000101110\n"
    "7 11111000010001000100010000100001000\n"
    "8 01110100011000101110100011000101110\n"
    "9 01110100011000101111000010001001100\n";

}  // namespace dpmn::priors
