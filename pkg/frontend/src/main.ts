// Page wiring: socket, canvas, status bar, keyboard and gamepad.

import {
  endSessionMessage, recordMessage, resetMessage, twistMessage, ZERO_TWIST,
} from "./protocol.js";
import {
  clampTwist, combineTwists, DEFAULT_KEYS, DEFAULT_PAD, twistFromGamepad,
  twistFromKeys, validateBindings,
} from "./input.js";
import {
  initialView, onBinary, onClose, onOpen, onText, SessionView, TwistPublisher,
} from "./session.js";
import { FrameRenderer, PixelSink } from "./render.js";

const SEND_HZ = 30;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class CanvasSink implements PixelSink {
  private canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;
  private image: ImageData | null = null;

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas unavailable");
    this.ctx = ctx;
  }

  putImage(rgba: Uint8ClampedArray, width: number, height: number): void {
    if (this.canvas.width !== width || this.canvas.height !== height) {
      this.canvas.width = width;
      this.canvas.height = height;
      this.image = null;
    }
    if (!this.image) this.image = this.ctx.createImageData(width, height);
    this.image.data.set(rgba);
    this.ctx.putImageData(this.image, 0, 0);
  }
}

function defaultUrl(): string {
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  const host = location.hostname || "127.0.0.1";
  return `${proto}//${host}:8765`;
}

function fmtTime(seconds: number): string {
  const m = Math.floor(seconds / 60);
  const s = seconds - m * 60;
  return `${m}:${s.toFixed(1).padStart(4, "0")}`;
}

function start(): void {
  validateBindings(DEFAULT_KEYS, DEFAULT_PAD);

  const canvas = el<HTMLCanvasElement>("camera");
  const banner = el<HTMLDivElement>("banner");
  const connState = el<HTMLSpanElement>("conn");
  const simClock = el<HTMLSpanElement>("sim-time");
  const demoClock = el<HTMLSpanElement>("demo-time");
  const counters = el<HTMLSpanElement>("counters");
  const recordDot = el<HTMLSpanElement>("record-dot");
  const recordBtn = el<HTMLButtonElement>("record-btn");
  const resetBtn = el<HTMLButtonElement>("reset-btn");
  const endBtn = el<HTMLButtonElement>("end-btn");
  const errorLine = el<HTMLDivElement>("error-line");

  const renderer = new FrameRenderer(new CanvasSink(canvas));
  const publisher = new TwistPublisher();
  const pressed = new Set<string>();
  let view: SessionView = initialView();
  let sendTimer: number | undefined;

  const params = new URLSearchParams(location.search);
  const url = params.get("server") ?? defaultUrl();
  const socket = new WebSocket(url);
  socket.binaryType = "arraybuffer";

  function paint(): void {
    connState.textContent = view.connection;
    recordDot.className = view.recording ? "dot on" : "dot";
    recordBtn.textContent = view.recording ? "stop recording" : "start recording";
    demoClock.textContent = fmtTime(view.demoTime);
    simClock.textContent = view.frame ? fmtTime(view.frame.simTime) : "-";
    counters.textContent =
      `${view.episodes} episodes / ${view.recordedFrames} recorded frames`;
    errorLine.textContent = view.lastError ?? "";
    banner.style.display = view.connection === "closed" ? "block" : "none";
    const disabled = view.connection !== "open";
    recordBtn.disabled = disabled;
    resetBtn.disabled = disabled;
    endBtn.disabled = disabled;
  }

  function currentTwist() {
    let v = twistFromKeys(pressed);
    const pads = navigator.getGamepads ? navigator.getGamepads() : [];
    for (const pad of pads) {
      if (!pad || pad.mapping !== "standard") continue;
      const buttons = pad.buttons.map(b => b.value);
      v = combineTwists(v, twistFromGamepad(pad.axes, buttons));
    }
    return clampTwist(v);
  }

  socket.onopen = () => {
    view = onOpen(view);
    // explicit zeros while idle, so the server never has to guess
    sendTimer = window.setInterval(() => {
      if (socket.readyState === WebSocket.OPEN) {
        socket.send(twistMessage(currentTwist(), publisher.next()));
      }
    }, 1000 / SEND_HZ);
    paint();
  };

  socket.onclose = () => {
    view = onClose(view);
    if (sendTimer !== undefined) clearInterval(sendTimer);
    pressed.clear();
    paint();
  };

  socket.onmessage = ev => {
    if (ev.data instanceof ArrayBuffer) {
      view = onBinary(view, ev.data);
      if (view.frame && view.framesSeen > renderer.drawn) {
        renderer.draw(view.frame);
      }
    } else if (typeof ev.data === "string") {
      view = onText(view, ev.data);
    }
    paint();
  };

  window.addEventListener("keydown", ev => {
    if (ev.repeat) return;
    if (ev.code === "KeyR") {
      recordBtn.click();
      return;
    }
    pressed.add(ev.code);
  });
  window.addEventListener("keyup", ev => pressed.delete(ev.code));
  window.addEventListener("blur", () => pressed.clear());

  recordBtn.onclick = () => socket.send(recordMessage(!view.recording));
  resetBtn.onclick = () => socket.send(resetMessage());
  endBtn.onclick = () => {
    socket.send(twistMessage(ZERO_TWIST, publisher.next()));
    socket.send(endSessionMessage());
  };

  paint();
}

window.addEventListener("DOMContentLoaded", start);
