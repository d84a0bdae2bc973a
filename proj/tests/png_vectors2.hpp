#pragma once
// Ancillary chunk + split-IDAT reference.
namespace png_vectors2 {
inline const unsigned char split4x3[] = {137,80,78,71,13,10,26,10,0,0,0,13,73,72,68,82,0,0,0,4,0,0,0,3,8,0,0,0,0,145,159,241,26,0,0,0,13,116,69,88,116,67,111,109,109,101,110,116,0,104,101,108,108,111,230,255,174,36,0,0,0,11,73,68,65,84,120,218,99,96,224,18,145,99,208,48,178,42,21,13,7,0,0,0,12,73,68,65,84,113,99,8,136,74,201,3,0,12,143,2,149,135,159,169,145,0,0,0,0,73,69,78,68,174,66,96,130};
inline const unsigned n_split4x3 = 117;
inline const unsigned char split4x3_pixels[] = {0,10,20,30,40,50,60,70,80,90,100,110};
} // namespace png_vectors2
