/* tslint:disable */
/* eslint-disable */

/**
 * A small up-resolving model trained on a toy dataset, one step at a time.
 */
export class Session {
    free(): void;
    [Symbol.dispose](): void;
    constructor(seed: bigint);
    /**
     * Predicted cloud for a held-out sample.
     */
    predict(index: number): Float32Array;
    /**
     * Runs `n` optimiser steps and returns the last total loss.
     */
    step(n: number): number;
    test_cloud(index: number): Float32Array;
    test_image(index: number): Float32Array;
    readonly steps: bigint;
    readonly test_count: number;
}

/**
 * A random primitive with its silhouette and surface samples.
 */
export class Shape {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Flat `xyz` triples in the camera frame.
     */
    cloud(): Float32Array;
    /**
     * `category` is one of sphere, box, cylinder, capsule, torus.
     */
    constructor(category: string, seed: bigint, size: number, points: number);
    /**
     * Row-major `size * size` coverage in `[0, 1]`.
     */
    silhouette(): Float32Array;
    readonly size: number;
}

/**
 * Chamfer distance between two flat `xyz` clouds.
 */
export function chamfer(a: Float32Array, b: Float32Array, use_grid: boolean): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly __wbg_shape_free: (a: number, b: number) => void;
    readonly chamfer: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly session_new: (a: bigint) => [number, number, number];
    readonly session_predict: (a: number, b: number) => [number, number, number, number];
    readonly session_step: (a: number, b: number) => [number, number, number];
    readonly session_steps: (a: number) => bigint;
    readonly session_test_cloud: (a: number, b: number) => [number, number];
    readonly session_test_count: (a: number) => number;
    readonly session_test_image: (a: number, b: number) => [number, number];
    readonly shape_cloud: (a: number) => [number, number];
    readonly shape_new: (a: number, b: number, c: bigint, d: number, e: number) => [number, number, number];
    readonly shape_silhouette: (a: number) => [number, number];
    readonly shape_size: (a: number) => number;
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
