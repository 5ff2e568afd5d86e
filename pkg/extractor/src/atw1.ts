/**
 * ATW1 raster container: 16-byte header (magic "ATW1", u32 LE height,
 * u32 LE width, u32 LE dtype tag 0 = float32) followed by row-major
 * little-endian float32 values. A stack is several records back to back.
 */

import { readFileSync, writeFileSync } from "node:fs";

const MAGIC = "ATW1";
const HEADER_BYTES = 16;
const DTYPE_FLOAT32 = 0;

export interface Raster {
  height: number;
  width: number;
  /** Row-major, length height * width. */
  data: Float32Array;
}

export function encodeRecord(raster: Raster): Buffer {
  const { height, width, data } = raster;
  if (data.length !== height * width) {
    throw new Error(`data length ${data.length} != ${height}x${width}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + data.length * 4);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(height, 4);
  buf.writeUInt32LE(width, 8);
  buf.writeUInt32LE(DTYPE_FLOAT32, 12);
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], HEADER_BYTES + 4 * i);
  }
  return buf;
}

function decodeRecord(buf: Buffer, offset: number): { raster: Raster; next: number } {
  if (buf.length - offset < HEADER_BYTES) {
    throw new Error("truncated ATW1 header");
  }
  const magic = buf.toString("ascii", offset, offset + 4);
  if (magic !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}`);
  }
  const height = buf.readUInt32LE(offset + 4);
  const width = buf.readUInt32LE(offset + 8);
  const tag = buf.readUInt32LE(offset + 12);
  if (tag !== DTYPE_FLOAT32) {
    throw new Error(`unsupported dtype tag ${tag}`);
  }
  const count = height * width;
  const start = offset + HEADER_BYTES;
  if (buf.length - start < count * 4) {
    throw new Error("truncated ATW1 payload");
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(start + 4 * i);
  }
  return { raster: { height, width, data }, next: start + count * 4 };
}

export function writeAtw1(path: string, raster: Raster): void {
  writeFileSync(path, encodeRecord(raster));
}

export function writeAtw1Stack(path: string, rasters: Raster[]): void {
  writeFileSync(path, Buffer.concat(rasters.map(encodeRecord)));
}

export function readAtw1(path: string): Raster {
  const buf = readFileSync(path);
  const { raster, next } = decodeRecord(buf, 0);
  if (next !== buf.length) {
    throw new Error("trailing bytes after single ATW1 record");
  }
  return raster;
}

export function readAtw1Stack(path: string): Raster[] {
  const buf = readFileSync(path);
  const out: Raster[] = [];
  let offset = 0;
  while (offset < buf.length) {
    const { raster, next } = decodeRecord(buf, offset);
    out.push(raster);
    offset = next;
  }
  return out;
}
