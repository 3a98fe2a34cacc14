// Wire format shared with the simulation server.
//
// Server -> client, binary: 16-byte header then packed RGB.
//   bytes 0..3   magic "SVCF"
//   bytes 4..5   uint16 LE  image width
//   bytes 6..7   uint16 LE  image height
//   bytes 8..11  float32 LE simulation time, seconds
//   byte  12     recording flag (0/1)
//   bytes 13..15 padding
// Server -> client, text: JSON status / error objects.
// Client -> server, text: JSON twist / record / reset / end_session.

export const HEADER_BYTES = 16;
export const MAGIC = [0x53, 0x56, 0x43, 0x46]; // "SVCF"

export interface VideoFrame {
  width: number;
  height: number;
  simTime: number;
  recording: boolean;
  pixels: Uint8Array; // width * height * 3, row-major RGB
}

export function parseFrame(buf: ArrayBuffer): VideoFrame | null {
  if (buf.byteLength < HEADER_BYTES) return null;
  const bytes = new Uint8Array(buf);
  for (let i = 0; i < 4; i++) {
    if (bytes[i] !== MAGIC[i]) return null;
  }
  const view = new DataView(buf);
  const width = view.getUint16(4, true);
  const height = view.getUint16(6, true);
  if (buf.byteLength !== HEADER_BYTES + width * height * 3) return null;
  return {
    width,
    height,
    simTime: view.getFloat32(8, true),
    recording: view.getUint8(12) !== 0,
    pixels: bytes.subarray(HEADER_BYTES),
  };
}

export interface StatusMessage {
  type: "status";
  demo_time: number;
  episodes: number;
  frames: number;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = StatusMessage | ErrorMessage;

export function parseServerMessage(text: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const m = obj as Record<string, unknown>;
  if (m.type === "status" && typeof m.demo_time === "number"
      && typeof m.episodes === "number" && typeof m.frames === "number") {
    return m as unknown as StatusMessage;
  }
  if (m.type === "error" && typeof m.message === "string") {
    return m as unknown as ErrorMessage;
  }
  return null;
}

export type Twist = [number, number, number, number, number, number];

export const ZERO_TWIST: Twist = [0, 0, 0, 0, 0, 0];

export function twistMessage(v: Twist, seq: number): string {
  return JSON.stringify({ type: "twist", v, seq });
}

export function recordMessage(on: boolean): string {
  return JSON.stringify({ type: "record", on });
}

export function resetMessage(): string {
  return JSON.stringify({ type: "reset" });
}

export function endSessionMessage(): string {
  return JSON.stringify({ type: "end_session" });
}
