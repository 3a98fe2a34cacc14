// Frame drawing, kept free of DOM types so it runs under plain node tests.
// The page hands in a thin canvas adapter; tests hand in a buffer.

import { VideoFrame } from "./protocol.js";

export interface PixelSink {
  /** Present one RGBA image. Called once per received frame. */
  putImage(rgba: Uint8ClampedArray, width: number, height: number): void;
}

/** Expand packed RGB to RGBA with full alpha. */
export function rgbToRgba(pixels: Uint8Array, out?: Uint8ClampedArray): Uint8ClampedArray {
  const n = pixels.length / 3;
  const rgba = out && out.length === n * 4 ? out : new Uint8ClampedArray(n * 4);
  for (let i = 0, j = 0; i < pixels.length; i += 3, j += 4) {
    rgba[j] = pixels[i];
    rgba[j + 1] = pixels[i + 1];
    rgba[j + 2] = pixels[i + 2];
    rgba[j + 3] = 255;
  }
  return rgba;
}

export class FrameRenderer {
  private sink: PixelSink;
  private scratch: Uint8ClampedArray | undefined;
  drawn = 0;

  constructor(sink: PixelSink) {
    this.sink = sink;
  }

  draw(frame: VideoFrame): void {
    this.scratch = rgbToRgba(frame.pixels, this.scratch);
    this.sink.putImage(this.scratch, frame.width, frame.height);
    this.drawn++;
  }
}
