/* tslint:disable */
/* eslint-disable */

/**
 * A false-colour label map.
 */
export class Segmentation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly rgba: Uint8Array;
    readonly segments: number;
}

export function nmsKeep(boxes: Uint32Array, scores: Float64Array, iou_threshold: number): Uint32Array;

export function proposeBoxes(width: number, height: number, rgba: Uint8Array, mode: string): Uint32Array;

export function segment(width: number, height: number, rgba: Uint8Array, k: number, min_size: number, sigma: number): Segmentation;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_segmentation_free: (a: number, b: number) => void;
    readonly nmsKeep: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly proposeBoxes: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly segment: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly segmentation_rgba: (a: number) => [number, number];
    readonly segmentation_segments: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
