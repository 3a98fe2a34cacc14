// Keyboard and gamepad state -> end-effector twist.
//
// Twist components are [vx, vy, vz, wx, wy, wz] in the tool frame; the tool
// points down at the table, so +vz descends. One hand translates, the other
// rotates. Several keys may drive the same component (opposing pairs cancel
// by summation), but any single key or analog axis drives exactly one.

import { Twist } from "./protocol.js";

export type Component = 0 | 1 | 2 | 3 | 4 | 5;

export interface AxisBinding {
  component: Component;
  scale: number; // m/s or rad/s at full deflection, sign gives direction
}

export const LIN_SCALE = 0.15;
export const ANG_SCALE = 0.5;
// Hard ceilings; the simulator clamps excursions anyway, these keep a typo
// in a custom binding from commanding something wild.
export const MAX_LIN_SCALE = 0.5;
export const MAX_ANG_SCALE = 1.0;

export const DEADZONE = 0.1;

export const DEFAULT_KEYS: Record<string, AxisBinding> = {
  KeyW: { component: 0, scale: +LIN_SCALE },
  KeyS: { component: 0, scale: -LIN_SCALE },
  KeyA: { component: 1, scale: -LIN_SCALE },
  KeyD: { component: 1, scale: +LIN_SCALE },
  KeyE: { component: 2, scale: +LIN_SCALE }, // descend
  KeyQ: { component: 2, scale: -LIN_SCALE }, // retract
  KeyI: { component: 3, scale: +ANG_SCALE },
  KeyK: { component: 3, scale: -ANG_SCALE },
  KeyJ: { component: 4, scale: -ANG_SCALE },
  KeyL: { component: 4, scale: +ANG_SCALE },
  KeyU: { component: 5, scale: +ANG_SCALE },
  KeyO: { component: 5, scale: -ANG_SCALE },
};

// Standard-mapping pad: sticks translate/rotate, triggers move vertically,
// bumpers yaw.
export interface GamepadBindings {
  axes: Record<number, AxisBinding>;
  buttons: Record<number, AxisBinding>;
}

export const DEFAULT_PAD: GamepadBindings = {
  axes: {
    0: { component: 1, scale: +LIN_SCALE },
    1: { component: 0, scale: -LIN_SCALE }, // stick up = forward
    2: { component: 4, scale: +ANG_SCALE },
    3: { component: 3, scale: -ANG_SCALE },
  },
  buttons: {
    6: { component: 2, scale: -LIN_SCALE }, // LT retracts
    7: { component: 2, scale: +LIN_SCALE }, // RT descends
    4: { component: 5, scale: -ANG_SCALE },
    5: { component: 5, scale: +ANG_SCALE },
  },
};

export class BindingError extends Error {}

/** Reject bindings that double-drive a component or exceed the scale
 *  ceilings. An axis spans both directions by itself, so a component takes
 *  at most one axis and no buttons beside it; buttons push one way each,
 *  so a component may take a pair of them with opposite signs (like the
 *  opposing members of a key pair, which may also share components). */
export function validateBindings(keys: Record<string, AxisBinding>,
                                 pad: GamepadBindings): void {
  for (const [code, b] of Object.entries(keys)) {
    checkScale(b, `key ${code}`);
  }
  const axisOn = new Set<Component>();
  for (const [i, b] of Object.entries(pad.axes)) {
    checkScale(b, `axis ${i}`);
    if (axisOn.has(b.component)) {
      throw new BindingError(`twist component ${b.component} driven by more than one axis (axis ${i})`);
    }
    axisOn.add(b.component);
  }
  const buttonSigns = new Map<Component, number>();
  for (const [i, b] of Object.entries(pad.buttons)) {
    checkScale(b, `button ${i}`);
    if (axisOn.has(b.component)) {
      throw new BindingError(`twist component ${b.component} driven by both an axis and button ${i}`);
    }
    const sign = Math.sign(b.scale);
    const prior = buttonSigns.get(b.component);
    if (prior !== undefined && prior !== -sign) {
      throw new BindingError(`twist component ${b.component} pushed the same way by two buttons (button ${i})`);
    }
    buttonSigns.set(b.component, prior === undefined ? sign : NaN);
  }
}

function checkScale(b: AxisBinding, label: string): void {
  const limit = b.component < 3 ? MAX_LIN_SCALE : MAX_ANG_SCALE;
  if (!(Math.abs(b.scale) <= limit)) {
    throw new BindingError(`${label}: scale ${b.scale} exceeds ${limit}`);
  }
}

export function applyDeadzone(x: number, dz: number = DEADZONE): number {
  if (Math.abs(x) <= dz) return 0;
  // rescale so the live range still spans the full output
  const sign = x < 0 ? -1 : 1;
  return sign * (Math.abs(x) - dz) / (1 - dz);
}

export function twistFromKeys(pressed: ReadonlySet<string>,
                              keys: Record<string, AxisBinding> = DEFAULT_KEYS): Twist {
  const v: Twist = [0, 0, 0, 0, 0, 0];
  for (const code of pressed) {
    const b = keys[code];
    if (b) v[b.component] += b.scale;
  }
  return clampTwist(v);
}

export function twistFromGamepad(axes: readonly number[],
                                 buttons: readonly number[],
                                 pad: GamepadBindings = DEFAULT_PAD): Twist {
  const v: Twist = [0, 0, 0, 0, 0, 0];
  for (const [idx, b] of Object.entries(pad.axes)) {
    const raw = axes[Number(idx)];
    if (raw !== undefined) v[b.component] += applyDeadzone(raw) * b.scale;
  }
  for (const [idx, b] of Object.entries(pad.buttons)) {
    const raw = buttons[Number(idx)];
    if (raw !== undefined) v[b.component] += applyDeadzone(raw) * b.scale;
  }
  return v;
}

export function combineTwists(a: Twist, b: Twist): Twist {
  return a.map((x, i) => x + b[i]) as Twist;
}

// A key pair never exceeds its own scale, but key+pad on one component can;
// cap at the binding ceilings so combined input stays sane.
export function clampTwist(v: Twist): Twist {
  return v.map((x, i) => {
    const limit = i < 3 ? MAX_LIN_SCALE : MAX_ANG_SCALE;
    return Math.max(-limit, Math.min(limit, x));
  }) as Twist;
}
