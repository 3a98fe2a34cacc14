// Client-side session state, kept deliberately dumb: every field mirrors
// something the server said. Recording comes from the latest frame header,
// the clocks and counters from the latest status message. Nothing here
// guesses ahead of an acknowledgement.

import { parseFrame, parseServerMessage, VideoFrame } from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

export interface SessionView {
  connection: Connection;
  frame: VideoFrame | null;
  framesSeen: number;
  droppedFrames: number;
  recording: boolean;
  demoTime: number;
  episodes: number;
  recordedFrames: number;
  lastError: string | null;
}

export function initialView(): SessionView {
  return {
    connection: "connecting",
    frame: null,
    framesSeen: 0,
    droppedFrames: 0,
    recording: false,
    demoTime: 0,
    episodes: 0,
    recordedFrames: 0,
    lastError: null,
  };
}

export function onOpen(v: SessionView): SessionView {
  return { ...v, connection: "open" };
}

export function onClose(v: SessionView): SessionView {
  return { ...v, connection: "closed" };
}

/** Returns the updated view; view.frame is fresh when a frame parsed. */
export function onBinary(v: SessionView, buf: ArrayBuffer): SessionView {
  const frame = parseFrame(buf);
  if (frame === null) {
    return { ...v, droppedFrames: v.droppedFrames + 1 };
  }
  return {
    ...v,
    frame,
    framesSeen: v.framesSeen + 1,
    recording: frame.recording,
  };
}

export function onText(v: SessionView, text: string): SessionView {
  const msg = parseServerMessage(text);
  if (msg === null) return v;
  if (msg.type === "error") {
    return { ...v, lastError: msg.message };
  }
  return {
    ...v,
    demoTime: msg.demo_time,
    episodes: msg.episodes,
    recordedFrames: msg.frames,
  };
}

/** Outgoing twist stream with its monotonically increasing sequence number.
 *  Neutral input still produces a message: an explicit zero, not silence. */
export class TwistPublisher {
  private seq = 0;

  next(): number {
    return this.seq++;
  }

  get sent(): number {
    return this.seq;
  }
}
